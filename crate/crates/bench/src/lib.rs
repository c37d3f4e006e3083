//! Fixtures shared by the kernel benchmarks.

use swave_core::dist::{make_dataset, InputDistN, LabeledSampleSet};
use swave_core::experiment::cell_function;
use swave_core::mlp::{init_params, HiddenActivation, Mlp, MlpSpec};
use swave_core::{HardFunction, InputDist1D, Result};

/// The sweep's hard function for `(n, s)` and a labeled sample of it.
pub fn instance(n: usize, s: f64, rows: usize) -> Result<(HardFunction, LabeledSampleSet)> {
    let f = cell_function(n, s, InputDist1D::gaussian(), 1)?;
    let ds = make_dataset(&f, &InputDistN::gaussian(n), rows, 2, None)?;
    Ok((f, ds))
}

/// A ReLU network of `depth` hidden layers of width `width_factor · n`.
pub fn network(n: usize, depth: usize, width_factor: usize) -> Result<Mlp> {
    init_params(&MlpSpec::uniform(n, depth, width_factor * n, HiddenActivation::Relu)?, 3)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn fixtures_build() {
        let (f, ds) = instance(16, 1.0, 100).unwrap();
        assert_eq!(ds.len(), 100);
        assert_eq!(f.n, 16);
        assert_eq!(network(16, 2, 4).unwrap().spec.layer_sizes, vec![16, 64, 64, 1]);
    }
}
