use abstain_core::data::{gen_gaussian_mixture, Dataset};
use abstain_core::nets::ModelParams;
use abstain_zk::fixed::{quantize_model, FixedPointParams, QuantizedModel, QuantizedRef};

/// Seeded random classifier on the 2-D Gaussian task and `n` reference rows.
pub fn setup(seed: u64, hidden: usize, n: usize) -> (QuantizedModel, QuantizedRef) {
    let fp = FixedPointParams::default();
    let model = ModelParams::init(&[2, hidden, 3], seed).unwrap();
    let data = gen_gaussian_mixture(seed);
    let stride = data.len() / n;
    let rows: Vec<usize> = (0..n).map(|i| (i * stride + seed as usize) % data.len()).collect();
    let reference: Dataset = data.subset(&rows);
    (quantize_model(&model, &fp).unwrap(), QuantizedRef::from_dataset(&reference, &fp).unwrap())
}
