//! Shared fixtures for the criterion benches.

use std::sync::OnceLock;

use cdpq::calibration::{auto_calibrate, CalibrationPlan, CalibrationRun};
use cdpq::{DriveConfig, Model, Simulator, TransmonParams};

pub const MODEL: Model = Model::Rwa { n_levels: 3 };

/// Reference calibration, computed once per bench process.
pub fn calibration() -> &'static CalibrationRun {
    static RUN: OnceLock<CalibrationRun> = OnceLock::new();
    RUN.get_or_init(|| {
        auto_calibrate(
            &TransmonParams::reference_device(),
            &DriveConfig::reference_drive(),
            MODEL,
            &CalibrationPlan::reference(),
        )
        .expect("reference calibration")
    })
}

/// Simulator locked to the calibrated drive.
pub fn simulator() -> Simulator {
    Simulator::new(TransmonParams::reference_device(), &calibration().drive, MODEL).expect("reference simulator")
}
