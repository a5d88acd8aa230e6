use pyo3::prelude::*;

#[pymodule]
fn glstable_py(_m: &Bound<'_, PyModule>) -> PyResult<()> {
    Ok(())
}
