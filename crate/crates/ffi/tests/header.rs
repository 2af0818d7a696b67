use std::path::PathBuf;
use std::process::Command;

fn header() -> PathBuf {
    PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("include/nystrom_erm.h")
}

#[test]
fn header_declares_every_entry_point() {
    let text = std::fs::read_to_string(header()).unwrap();
    for f in [
        "ny_last_error_message", "ny_version", "ny_dataset_load_libsvm", "ny_dataset_from_dense",
        "ny_dataset_shape", "ny_dataset_free", "ny_train_params_default", "ny_train",
        "ny_model_predict", "ny_model_save", "ny_model_load", "ny_model_shape", "ny_model_free",
        "ny_leverage_scores", "ny_effective_dimensions",
    ] {
        assert!(text.contains(&format!("{f}(")), "{f} missing");
    }
    assert!(text.contains("typedef struct NyModel NyModel;"));
}

#[test]
fn header_compiles_as_c() {
    let Ok(status) = Command::new("cc")
        .args(["-std=c99", "-Wall", "-Werror", "-fsyntax-only", "-x", "c"])
        .arg(header())
        .status()
    else {
        // no C compiler available
        return;
    };
    assert!(status.success());
}
