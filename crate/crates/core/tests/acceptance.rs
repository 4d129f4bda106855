//! End-to-end acceptance checks. Each test prints one PASS/FAIL line before
//! asserting; run with `--nocapture` to see them all.

use ndarray::{s, Array2};
use nispa_lab::bench::{
    ablation_removal_curve, run_experiment, task_naive, task_network, train_and_measure_skewness, DataKind,
    ExperimentConfig, Method, RemovalMode, Scenario, TauKind,
};
use nispa_lab::data::{synthetic_gaussian_tasks, GaussianTaskSpec, TaskSequence};
use nispa_lab::engine::{loss_and_gradients, HeadLayout, Network};
use nispa_lab::nispa::{
    run_task, select_layer, tau_schedule, LearnerState, NispaConfig, TaskOptions, TauSchedule, UnitPartition,
    UnitState,
};
use nispa_lab::rewire::{drop_connections, grow_connections, GrowthPolicy};
use nispa_lab::{seeded_rng, Real};
use rand::Rng;

fn verdict(id: u32, name: &str, pass: bool, detail: String) {
    println!("acceptance {id:02} {name:<28} {} {detail}", if pass { "PASS" } else { "FAIL" });
}

fn mean(xs: &[f64]) -> f64 {
    xs.iter().sum::<f64>() / xs.len() as f64
}

/// Plastic-to-stable connections found by scanning every mask entry.
fn isolation_breaches(net: &Network, partition: &UnitPartition) -> usize {
    let last = net.layers().len() - 1;
    let mut breaches = 0;
    for (l, layer) in net.layers().iter().enumerate().skip(1) {
        let sources = partition.states(l - 1);
        for target in 0..layer.out_units() {
            let protected = if l == last {
                partition.stable_outputs()[target]
            } else {
                partition.state(l, target) != UnitState::Plastic
            };
            if !protected {
                continue;
            }
            for (source, &state) in sources.iter().enumerate() {
                if state == UnitState::Plastic && layer.mask()[(target, source)] {
                    breaches += 1;
                }
            }
        }
    }
    breaches
}

fn gaussian_sequence(seed: u64) -> TaskSequence {
    synthetic_gaussian_tasks(GaussianTaskSpec {
        n_tasks: 3,
        classes_per_task: 2,
        dim: 16,
        separation: 6.0,
        n_per_class: 100,
        seed,
    })
    .unwrap()
}

fn gaussian_config() -> NispaConfig {
    NispaConfig {
        epochs_per_phase: 2,
        accuracy_tolerance: 2.0,
        k: 8,
        batch_size: 32,
        density: 0.2,
        ..NispaConfig::default()
    }
}

fn gaussian_learner(seq: &TaskSequence, config: &NispaConfig, rng: &mut nispa_lab::Rng) -> LearnerState {
    let heads = HeadLayout::uniform(seq.len(), 2);
    let net = Network::init(&[16, 32, 32, heads.outputs()], config.density, heads, rng).unwrap();
    LearnerState::new(net, config)
}

#[test]
fn c01_structural_isolation() {
    let config = gaussian_config();
    let mut breaches = 0;
    let mut boundaries = 0;
    for seed in 0..3 {
        let seq = gaussian_sequence(seed);
        let mut rng = seeded_rng(seed);
        let mut state = gaussian_learner(&seq, &config, &mut rng);
        for (t, task) in seq.tasks.iter().enumerate() {
            run_task(&mut state, task, t, &config, TaskOptions::task_incremental(t, &config), &mut rng).unwrap();
            breaches += isolation_breaches(&state.net, &state.partition);
            boundaries += 1;
        }
    }
    let pass = breaches == 0;
    verdict(1, "structural isolation", pass, format!("{breaches} breaches over {boundaries} task boundaries"));
    assert!(pass);
}

#[test]
fn c02_frozen_weights_and_stable_activations() {
    let config = gaussian_config();
    let seq = gaussian_sequence(11);
    let mut rng = seeded_rng(11);
    let mut state = gaussian_learner(&seq, &config, &mut rng);
    run_task(&mut state, &seq.tasks[0], 0, &config, TaskOptions::task_incremental(0, &config), &mut rng).unwrap();
    let after_first = state.net.clone();
    let probe = seq.tasks[0].test.features.slice(s![..32, ..]).to_owned();
    let acts_before = state.net.hidden_activations(probe.view()).unwrap();
    let stable: Vec<Vec<usize>> = (0..state.partition.num_hidden()).map(|h| state.partition.stable(h)).collect();
    for t in 1..3 {
        run_task(&mut state, &seq.tasks[t], t, &config, TaskOptions::task_incremental(t, &config), &mut rng).unwrap();
    }
    let mut weight_diffs = 0;
    let mut frozen = 0;
    for (a, b) in after_first.layers().iter().zip(state.net.layers()) {
        for (pos, &f) in a.frozen().indexed_iter() {
            if f {
                frozen += 1;
                if a.weights()[pos].to_bits() != b.weights()[pos].to_bits() {
                    weight_diffs += 1;
                }
            }
        }
    }
    let acts_after = state.net.hidden_activations(probe.view()).unwrap();
    let mut act_diffs = 0;
    let mut checked = 0;
    for (h, units) in stable.iter().enumerate() {
        for &u in units {
            for r in 0..32 {
                checked += 1;
                if acts_before[h][(r, u)].to_bits() != acts_after[h][(r, u)].to_bits() {
                    act_diffs += 1;
                }
            }
        }
    }
    let pass = weight_diffs == 0 && act_diffs == 0 && frozen > 0 && checked > 0;
    verdict(
        2,
        "frozen immutability",
        pass,
        format!("{weight_diffs}/{frozen} frozen weights changed, {act_diffs}/{checked} stable activations changed"),
    );
    assert!(pass);
}

/// Smallest plastic subset reaching the target, found by enumeration.
/// Among the smallest, the one with the largest sum wins, then the
/// lexicographically smallest sorted index list.
fn exhaustive_selection(acts: &[Real], states: &[UnitState], tau: f64) -> Vec<usize> {
    let total: Real = acts.iter().sum();
    let target = tau as Real * total;
    let base: Real = acts.iter().zip(states).filter(|(_, &s)| s != UnitState::Plastic).map(|(a, _)| a).sum();
    let plastic: Vec<usize> = (0..acts.len()).filter(|&i| states[i] == UnitState::Plastic).collect();
    let mut best: Option<(usize, Real, Vec<usize>)> = None;
    for bits in 0u32..(1 << plastic.len()) {
        let subset: Vec<usize> = plastic.iter().enumerate().filter(|(b, _)| bits >> b & 1 == 1).map(|(_, &u)| u).collect();
        let sum: Real = subset.iter().map(|&u| acts[u]).sum();
        if base + sum < target {
            continue;
        }
        let better = match &best {
            None => true,
            Some((n, s, idx)) => {
                subset.len() < *n || (subset.len() == *n && (sum > *s || (sum == *s && subset < *idx)))
            }
        };
        if better {
            best = Some((subset.len(), sum, subset));
        }
    }
    best.map(|b| b.2).unwrap_or_default()
}

#[test]
fn c03_selection_matches_exhaustive_oracle() {
    let mut rng = seeded_rng(3);
    let (mut size_ok, mut members_ok, mut feasible) = (0, 0, 0);
    let n = 500;
    for _ in 0..n {
        let units = rng.random_range(1..=16);
        // dyadic values keep every partial sum exact
        let acts: Vec<Real> = (0..units).map(|_| rng.random_range(0..40) as Real / 8.0).collect();
        let mut states: Vec<UnitState> = (0..units)
            .map(|_| if rng.random_bool(0.3) { UnitState::Stable } else { UnitState::Plastic })
            .collect();
        while states.iter().filter(|&&s| s == UnitState::Plastic).count() > 12 {
            let i = states.iter().position(|&s| s == UnitState::Plastic).unwrap();
            states[i] = UnitState::Stable;
        }
        let tau: f64 = rng.random();
        let mut greedy = select_layer(&acts, &states, tau).unwrap();
        let oracle = exhaustive_selection(&acts, &states, tau);
        if !oracle.is_empty() || greedy.is_empty() {
            feasible += 1;
        }
        greedy.sort_unstable();
        size_ok += (greedy.len() == oracle.len()) as usize;
        members_ok += (greedy == oracle) as usize;
    }
    let pass = size_ok == n && members_ok == n;
    verdict(
        3,
        "selection oracle",
        pass,
        format!("size {size_ok}/{n}, membership {members_ok}/{n}, {feasible} instances with a selection"),
    );
    assert!(pass);
}

#[test]
fn c04_tau_schedule_closed_form() {
    let mut worst: f64 = 0.0;
    let mut monotone = true;
    for k in [30usize, 40] {
        let mut prev = f64::INFINITY;
        for p in 0..=k {
            let closed = (1.0 + (std::f64::consts::PI * p as f64 / k as f64).cos()) / 2.0;
            let got = tau_schedule(p, k, TauSchedule::Cosine).value;
            worst = worst.max((got - closed).abs());
            monotone &= got <= prev;
            prev = got;
        }
    }
    let pass = worst <= 1e-12 && monotone;
    verdict(4, "tau schedule", pass, format!("max error {worst:.2e}, monotone {monotone}"));
    assert!(pass);
}

#[test]
fn c05_density_conservation() {
    let mut rng = seeded_rng(5);
    let (mut exact, mut with_shortfall, mut bad) = (0, 0, 0);
    for round in 0..1000 {
        let sizes = [rng.random_range(2..8), rng.random_range(2..10), rng.random_range(2..10), rng.random_range(2..5)];
        let d = rng.random_range(0.05..1.0);
        let mut net = Network::init_seeded(&sizes, d, HeadLayout::single(sizes[3]), round).unwrap();
        let hidden: Vec<Vec<UnitState>> = sizes[1..3]
            .iter()
            .map(|&w| {
                (0..w)
                    .map(|_| match rng.random_range(0..3) {
                        0 => UnitState::Stable,
                        1 => UnitState::Candidate,
                        _ => UnitState::Plastic,
                    })
                    .collect()
            })
            .collect();
        let partition = UnitPartition::from_states(hidden, vec![false; sizes[3]]);
        let before: Vec<usize> = net.layers().iter().map(|l| l.connection_count()).collect();
        let dropped = drop_connections(&mut net, &partition);
        let policy = [GrowthPolicy::Random, GrowthPolicy::Novel, GrowthPolicy::Transfer][round as usize % 3];
        let grown = grow_connections(&mut net, &partition, &dropped.dropped(), policy, &mut rng);
        for (l, layer) in net.layers().iter().enumerate() {
            let short = grown.layers[l].shortfall;
            if before[l] - layer.connection_count() != short {
                bad += 1;
            } else if short == 0 {
                exact += 1;
            } else {
                with_shortfall += 1;
            }
        }
    }
    let pass = bad == 0;
    verdict(
        5,
        "density conservation",
        pass,
        format!("{exact} layers exact, {with_shortfall} layers lost exactly their shortfall, {bad} mismatches"),
    );
    assert!(pass);
}

#[test]
fn c06_gradient_check() {
    let sizes = [5, 7, 6, 3];
    let mut net = Network::init_seeded(&sizes, 1.0, HeadLayout::single(3), 6).unwrap();
    let mut rng = seeded_rng(6);
    for l in 0..3 {
        for u in 0..sizes[l + 1] {
            net.layer_mut(l).set_bias(u, rng.random_range(0.05..0.3));
        }
    }
    let x = Array2::from_shape_fn((4, 5), |_| rng.random_range(-1.0..1.0) as Real);
    let y = vec![0, 2, 1, 2];
    let head = 0..3;
    let (_, grads) = loss_and_gradients(&net, x.view(), &y, &head);
    let h = 1e-5;
    let mut worst: f64 = 0.0;
    for l in 0..3 {
        let (rows, cols) = net.layers()[l].weights().dim();
        for i in 0..rows {
            for j in 0..cols {
                let w = net.layers()[l].weights()[(i, j)];
                net.layer_mut(l).set_weight(i, j, w + h);
                let up = loss_and_gradients(&net, x.view(), &y, &head).0;
                net.layer_mut(l).set_weight(i, j, w - h);
                let down = loss_and_gradients(&net, x.view(), &y, &head).0;
                net.layer_mut(l).set_weight(i, j, w);
                let numeric = (up - down) / (2.0 * h);
                let analytic = grads.weights[l][(i, j)];
                let scale = numeric.abs().max(analytic.abs());
                if scale > 1e-7 {
                    worst = worst.max((numeric - analytic).abs() / scale);
                }
            }
        }
    }
    let pass = worst < 1e-4;
    verdict(6, "gradient check", pass, format!("max relative error {worst:.2e}"));
    assert!(pass);
}

/// Two tasks on 4x4 pooled digits: {0,1} then {2,3}.
fn two_task_digits() -> ExperimentConfig {
    ExperimentConfig {
        n_tasks: 2,
        pool: 2,
        density: 0.2,
        ..ExperimentConfig::desk()
    }
}

#[test]
fn c07_forgetting() {
    let config = two_task_digits();
    let (mut nispa_drop, mut naive_drop) = (Vec::new(), Vec::new());
    for seed in 0..5 {
        let seq = config.build_sequence(seed).unwrap();
        let nispa = config.nispa(seed);
        let mut rng = seeded_rng(seed);
        let net = task_network(&seq, &config.hidden, nispa.density, &mut rng).unwrap();
        let mut state = LearnerState::new(net, &nispa);
        let mut first = 0.0;
        for (t, task) in seq.tasks.iter().enumerate() {
            run_task(&mut state, task, t, &nispa, TaskOptions::task_incremental(t, &nispa), &mut rng).unwrap();
            if t == 0 {
                first = state.net.evaluate(&seq.tasks[0].test, 0).unwrap();
            }
        }
        nispa_drop.push(100.0 * (first - state.net.evaluate(&seq.tasks[0].test, 0).unwrap()));
        let (matrix, _) = task_naive(&seq, &config.hidden, &nispa, &mut seeded_rng(seed)).unwrap();
        naive_drop.push(100.0 * (matrix[0][0] - matrix[1][0]));
    }
    let (a, b) = (mean(&nispa_drop), mean(&naive_drop));
    let pass = a <= 2.0 && b >= 15.0;
    verdict(
        7,
        "forgetting",
        pass,
        format!("task-1 drop: nispa {a:.2} pts {nispa_drop:.2?}, naive {b:.2} pts {naive_drop:.2?}"),
    );
    assert!(pass);
}

/// Two hidden layers at 10% density, as in the reference activation study.
fn pooled_digits_all_classes() -> ExperimentConfig {
    ExperimentConfig {
        pool: 2,
        density: 0.1,
        ..ExperimentConfig::desk()
    }
}

#[test]
fn c08_activation_skewness() {
    let config = pooled_digits_all_classes();
    let (_, _, report) = train_and_measure_skewness(&config, 0, 10).unwrap();
    let min = report.min_g1();
    let pass = min > 1.0;
    let per_epoch: Vec<Vec<String>> = report
        .per_epoch
        .iter()
        .map(|l| l.iter().map(|s| format!("{:.2}", s.g1)).collect())
        .collect();
    verdict(
        8,
        "activation skewness",
        pass,
        format!("min g1 {min:.3}, accuracy {:.3}, per epoch {per_epoch:?}", report.final_accuracy),
    );
    assert!(pass);
}

#[test]
fn c09_importance_ordering() {
    let config = pooled_digits_all_classes();
    let width = config.hidden[0];
    let ks = [width / 10, width / 5];
    let (mut top, mut random) = (vec![Vec::new(); 2], vec![Vec::new(); 2]);
    for seed in 0..5 {
        let (net, task, _) = train_and_measure_skewness(&config, seed, 10).unwrap();
        let mut rng = seeded_rng(100 + seed);
        let t = ablation_removal_curve(&net, &task.train, &task.test, 0, &ks, RemovalMode::TopActive, &mut rng).unwrap();
        let r = ablation_removal_curve(&net, &task.train, &task.test, 0, &ks, RemovalMode::Random, &mut rng).unwrap();
        for i in 0..2 {
            top[i].push(t[i]);
            random[i].push(r[i]);
        }
    }
    let margins: Vec<f64> = (0..2).map(|i| 100.0 * (mean(&random[i]) - mean(&top[i]))).collect();
    let pass = margins.iter().all(|&m| m >= 3.0);
    verdict(
        9,
        "importance ordering",
        pass,
        format!(
            "k={ks:?}: top-active {:.3}/{:.3}, random {:.3}/{:.3}, margins {margins:.2?} pts",
            mean(&top[0]),
            mean(&top[1]),
            mean(&random[0]),
            mean(&random[1])
        ),
    );
    assert!(pass);
}

#[test]
fn c10_growth_policy_trend() {
    let base = ExperimentConfig {
        data: DataKind::DigitsPermuted,
        n_tasks: 2,
        p_r: 0.1,
        pool: 2,
        density: 0.2,
        n_seeds: 5,
        ..ExperimentConfig::desk()
    };
    let mut new_units = Vec::new();
    let mut accuracy = Vec::new();
    for policy in [GrowthPolicy::Novel, GrowthPolicy::Transfer] {
        let report = run_experiment(&ExperimentConfig {
            growth_policy: policy,
            ..base.clone()
        })
        .unwrap();
        assert!(report.is_success(), "{:?}", report.failures);
        let counts: Vec<f64> = report
            .runs
            .iter()
            .map(|r| r.task_logs[1].new_stable.iter().sum::<usize>() as f64)
            .collect();
        new_units.push(mean(&counts));
        accuracy.push(100.0 * report.overall.mean);
    }
    let pass = new_units[1] <= new_units[0] && (accuracy[0] - accuracy[1]).abs() <= 2.0;
    verdict(
        10,
        "growth policy trend",
        pass,
        format!(
            "new stable units for task 2: novel {:.1}, transfer {:.1}; accuracy novel {:.2}, transfer {:.2}",
            new_units[0], new_units[1], accuracy[0], accuracy[1]
        ),
    );
    assert!(pass);
}

#[test]
fn c11_replay_delta() {
    let base = ExperimentConfig {
        n_tasks: 5,
        pool: 2,
        n_seeds: 5,
        buffer_per_class: 10,
        // reference settings for a 10-per-class buffer on digits; learning
        // rate and batch size stay at the desk values
        lambda: 5.0,
        density: 0.1,
        ..ExperimentConfig::desk()
    };
    let run = |method| {
        let report = run_experiment(&ExperimentConfig {
            method,
            scenario: Scenario::Class,
            ..base.clone()
        })
        .unwrap();
        assert!(report.is_success(), "{:?}", report.failures);
        report
    };
    let nispa = run(Method::NispaReplay);
    let er = run(Method::Er);
    // single head, no buffer
    let naive = run(Method::Naive);
    let wins = nispa.runs.iter().zip(&er.runs).filter(|(a, b)| a.mean_accuracy > b.mean_accuracy).count();
    let balanced = nispa.runs.iter().chain(&er.runs).all(|r| r.buffer_balanced.len() == 5 && r.buffer_balanced.iter().all(|&b| b));
    let delta = 100.0 * (nispa.overall.mean - naive.overall.mean);
    let pass = delta >= 20.0 && wins >= 3 && balanced;
    verdict(
        11,
        "replay delta",
        pass,
        format!(
            "nispa-replay {:.2}, er {:.2}, naive {:.2}; delta {delta:.2} pts, beats er on {wins}/5 seeds, balanced {balanced}",
            100.0 * nispa.overall.mean,
            100.0 * er.overall.mean,
            100.0 * naive.overall.mean
        ),
    );
    assert!(pass);
}

#[test]
fn c12_ablation_switches() {
    let config = two_task_digits();
    let mut lines = Vec::new();
    let mut ok = true;
    for reinit in [true, false] {
        for tau in [TauKind::Cosine, TauKind::Linear] {
            let variant = ExperimentConfig {
                reinit,
                tau_schedule: tau,
                ..config.clone()
            };
            let seq = variant.build_sequence(0).unwrap();
            let nispa = variant.nispa(0);
            let mut rng = seeded_rng(0);
            let net = task_network(&seq, &variant.hidden, nispa.density, &mut rng).unwrap();
            let mut state = LearnerState::new(net, &nispa);
            let mut frozen_snapshot: Option<Network> = None;
            for (t, task) in seq.tasks.iter().enumerate() {
                let done = run_task(&mut state, task, t, &nispa, TaskOptions::task_incremental(t, &nispa), &mut rng);
                ok &= done.is_ok();
                ok &= isolation_breaches(&state.net, &state.partition) == 0;
                ok &= state.net.check_invariants().is_ok();
                if let Some(prev) = &frozen_snapshot {
                    for (a, b) in prev.layers().iter().zip(state.net.layers()) {
                        for (pos, &f) in a.frozen().indexed_iter() {
                            ok &= !f || a.weights()[pos].to_bits() == b.weights()[pos].to_bits();
                        }
                    }
                }
                frozen_snapshot = Some(state.net.clone());
            }
            let acc = nispa_lab::replay::average_accuracy(
                &(0..2).map(|t| state.net.evaluate(&seq.tasks[t].test, t).unwrap()).collect::<Vec<_>>(),
            );
            lines.push(format!("{}+{:?} {:.3}", if reinit { "R" } else { "NR" }, tau, acc));
        }
    }
    verdict(12, "ablation switches", ok, lines.join(", "));
    assert!(ok);
}
