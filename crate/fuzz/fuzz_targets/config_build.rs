#![no_main]

use hilfer_cli::ExperimentConfig;
use libfuzzer_sys::fuzz_target;

// Full validation: catalog lookup, range checks, problem sampling on [-r, b].
fuzz_target!(|data: &[u8]| {
    let Ok(text) = std::str::from_utf8(data) else { return };
    if let Ok(config) = text.parse::<ExperimentConfig>() {
        let _ = config.build_problem();
        let _ = config.solve_config();
        let _ = config.perturbations();
    }
});
