use std::path::{Path, PathBuf};

use crate::error::{Error, Result};
use crate::ingest::records::csv_err;
use crate::ingest::{Marginals, Schema};

/// Writes `hist_{VAR}.csv` per variable with columns
/// `category,microdata,synthetic,target` in schema category order. Person
/// variables omit the NA category. Missing sources leave their column blank.
pub fn emit_histograms(
    dir: &Path,
    schema: &Schema,
    microdata: Option<&Marginals>,
    synthetic: Option<&Marginals>,
    target: Option<&Marginals>,
) -> Result<Vec<PathBuf>> {
    for m in [microdata, synthetic, target].into_iter().flatten() {
        m.check_against(schema)?;
    }
    std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    let vars = schema.household_vars.iter().chain(&schema.person_vars);
    let column = |m: Option<&Marginals>, k: usize| m.map(|m| m.vectors().nth(k).expect("checked").clone());
    let mut paths = Vec::new();
    for (k, v) in vars.enumerate() {
        let path = dir.join(format!("hist_{}.csv", v.name));
        let f = std::fs::File::create(&path).map_err(|e| Error::io(&path, e))?;
        let mut w = csv::Writer::from_writer(f);
        w.write_record(["category", "microdata", "synthetic", "target"]).map_err(csv_err)?;
        let cols = [column(microdata, k), column(synthetic, k), column(target, k)];
        let n = if k < schema.household_vars.len() {
            v.n_categories()
        } else {
            v.n_categories() - 1
        };
        for (c, label) in v.categories.iter().take(n).enumerate() {
            let mut rec = vec![label.clone()];
            rec.extend(cols.iter().map(|col| col.as_ref().map(|x| x[c].to_string()).unwrap_or_default()));
            w.write_record(&rec).map_err(csv_err)?;
        }
        w.flush().map_err(|e| Error::io(&path, e))?;
        paths.push(path);
    }
    Ok(paths)
}
