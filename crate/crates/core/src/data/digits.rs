use super::idx::parse_idx;
use super::Dataset;

/// Side length of the bundled digit images.
pub const DIGITS_SIDE: usize = 8;

static TRAIN_IMAGES: &[u8] = include_bytes!("../../data/digits-train-images-idx3-ubyte");
static TRAIN_LABELS: &[u8] = include_bytes!("../../data/digits-train-labels-idx1-ubyte");
static TEST_IMAGES: &[u8] = include_bytes!("../../data/digits-test-images-idx3-ubyte");
static TEST_LABELS: &[u8] = include_bytes!("../../data/digits-test-labels-idx1-ubyte");

/// The bundled 8x8 handwritten digits (ten classes, 64 features), already
/// block-pooled from 32x32 bitmaps. Returns `(train, test)`.
///
/// This is a small stand-in for MNIST-family data, not MNIST itself.
pub fn bundled_digits() -> (Dataset, Dataset) {
    let train = parse_idx(TRAIN_IMAGES, TRAIN_LABELS).expect("bundled training digits parse");
    let test = parse_idx(TEST_IMAGES, TEST_LABELS).expect("bundled test digits parse");
    (train, test)
}
