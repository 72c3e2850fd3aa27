//! Runs python/smoke_test.py against the bindings in an embedded interpreter,
//! so the Python surface is covered by `cargo test` without a wheel build.

use std::ffi::CString;
use std::path::Path;

use tabforge_py::tabforge_py;

use pyo3::prelude::*;
use pyo3::types::PyDict;

#[test]
fn python_smoke_script() {
    pyo3::append_to_inittab!(tabforge_py);
    let script = Path::new(env!("CARGO_MANIFEST_DIR")).join("python/smoke_test.py");
    let code = CString::new(std::fs::read_to_string(&script).unwrap()).unwrap();
    Python::attach(|py| {
        let globals = PyDict::new(py);
        globals.set_item("__name__", "__main__").unwrap();
        globals.set_item("__file__", script.to_string_lossy()).unwrap();
        if let Err(e) = py.run(&code, Some(&globals), None) {
            e.print(py);
            panic!("smoke script failed: {e}");
        }
    });
}
