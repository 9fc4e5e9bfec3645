//! Randomized executor-versus-oracle checking.

use crate::gen::random_case;
use crate::hw::HwConfig;
use crate::model::CnnModel;
use crate::numeric::NumericProfile;
use crate::oracle::infer_ref;
use crate::sot::{compile_sot, execute_with, ExecOptions, Fault};
use crate::tensor::FeatureMapTensor;
use crate::weights::WeightStore;

#[derive(Debug, Clone)]
pub struct FuzzCase {
    pub seed: u64,
    pub index: u64,
    pub profile: NumericProfile,
    pub model: CnnModel,
    pub weights: WeightStore,
    pub image: FeatureMapTensor,
}

#[derive(Debug, Clone)]
pub struct FuzzFailure {
    pub case: FuzzCase,
    pub message: String,
}

/// Case `index` of run `seed`; even indices use the int8 profile, odd the
/// wide one.
pub fn fuzz_case(seed: u64, index: u64) -> FuzzCase {
    let profile = if index.is_multiple_of(2) {
        NumericProfile::int8()
    } else {
        NumericProfile::wide()
    };
    let (model, weights, image) = random_case(seed, index, &profile);
    FuzzCase {
        seed,
        index,
        profile,
        model,
        weights,
        image,
    }
}

/// Runs one case through the executor and the oracle; `Err` describes the
/// first disagreement.
pub fn check_case(case: &FuzzCase, hw: &HwConfig, fault: Option<Fault>) -> Result<(), String> {
    let program = compile_sot(&case.model, hw).map_err(|e| format!("compile: {}", e))?;
    let options = ExecOptions {
        fault,
        ..ExecOptions::default()
    };
    let run = execute_with(&program, &case.weights, &case.image, hw, &case.profile, options)
        .map_err(|e| format!("execute: {}", e))?;
    let (refs, _) =
        infer_ref(&case.model, &case.weights, &case.image, &case.profile).map_err(|e| format!("oracle: {}", e))?;
    for (i, (got, want)) in run.outputs.iter().zip(&refs).enumerate() {
        if got != want {
            let first = got
                .data()
                .iter()
                .zip(want.data())
                .position(|(a, b)| a != b)
                .unwrap_or(0);
            return Err(format!(
                "layer {}: output differs from oracle at flat index {} ({} vs {})",
                i + 1,
                first,
                got.data()[first],
                want.data()[first]
            ));
        }
    }
    for s in &run.stats.layers {
        if !s.partition_holds() {
            return Err(format!(
                "layer {}: effective {} + overheads {} != peak {}",
                s.layer,
                s.effective_muls_a,
                s.overheads.total(),
                s.peak_muls_c
            ));
        }
    }
    Ok(())
}

/// Checks `count` cases, stopping at the first failure.
pub fn run_fuzz(seed: u64, count: u64, hw: &HwConfig, fault: Option<Fault>) -> Result<u64, Box<FuzzFailure>> {
    for index in 0..count {
        let case = fuzz_case(seed, index);
        if let Err(message) = check_case(&case, hw, fault) {
            return Err(Box::new(FuzzFailure { case, message }));
        }
    }
    Ok(count)
}
