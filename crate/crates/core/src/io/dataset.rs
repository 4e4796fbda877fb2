use std::collections::BTreeMap;
use std::io::{Read, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::estimation::Dataset;

/// One row of a dataset file. `variance`, when present, must agree across
/// the rows of a series.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
struct Row {
    condition_id: String,
    observable: String,
    time: f64,
    replicate: usize,
    value: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    variance: Option<f64>,
}

/// Parse delimited observations without estimating variances.
pub fn read_dataset<R: Read>(reader: R) -> Result<Dataset> {
    let mut rdr = csv::ReaderBuilder::new().trim(csv::Trim::All).from_reader(reader);
    let mut cells: BTreeMap<(String, String), Vec<(f64, usize, f64, u64)>> = BTreeMap::new();
    let mut variances: BTreeMap<(String, String), f64> = BTreeMap::new();
    let mut order = Vec::new();
    let headers = rdr.headers().map_err(|e| Error::Data(format!("line 1: {e}")))?.clone();
    for record in rdr.records() {
        let record = record.map_err(|e| {
            let line = e.position().map_or(0, |p| p.line());
            Error::Data(format!("line {line}: {e}"))
        })?;
        let line = record.position().map_or(0, |p| p.line());
        let rec: Row = record.deserialize(Some(&headers)).map_err(|e| Error::Data(format!("line {line}: {e}")))?;
        if !rec.time.is_finite() || rec.time < 0.0 {
            return Err(Error::Data(format!("line {line}: time must be finite and non-negative, got {}", rec.time)));
        }
        if !rec.value.is_finite() {
            return Err(Error::Data(format!("line {line}: value must be finite")));
        }
        let key = (rec.condition_id.clone(), rec.observable.clone());
        if let Some(v) = rec.variance {
            match variances.get(&key) {
                Some(&w) if w != v => {
                    return Err(Error::Data(format!(
                        "line {line}: variance {v} disagrees with {w} given earlier for ({}, {})",
                        rec.observable, rec.condition_id
                    )))
                }
                _ => {
                    variances.insert(key.clone(), v);
                }
            }
        }
        if !cells.contains_key(&key) {
            order.push(key.clone());
        }
        cells.entry(key).or_default().push((rec.time, rec.replicate, rec.value, line));
    }
    let mut data = Dataset::default();
    for key in order {
        let mut rows = cells.remove(&key).expect("key recorded");
        rows.sort_by(|a, b| a.0.total_cmp(&b.0).then(a.1.cmp(&b.1)));
        for w in rows.windows(2) {
            if w[0].0 == w[1].0 && w[0].1 == w[1].1 {
                return Err(Error::Data(format!(
                    "line {}: replicate {} of ({}, {}) at t = {} appears twice",
                    w[1].3, w[1].1, key.1, key.0, w[1].0
                )));
            }
        }
        for (t, _, v, _) in rows {
            data.push(&key.0, &key.1, t, v);
        }
        if let Some(&v) = variances.get(&key) {
            data.find_mut(&key.0, &key.1).expect("series pushed").variance = Some(v);
        }
    }
    data.validate()?;
    Ok(data)
}

/// Read a dataset file and estimate every variance not given in the file
/// from replicates.
pub fn load_dataset(path: impl AsRef<Path>) -> Result<Dataset> {
    let path = path.as_ref();
    let file =
        std::fs::File::open(path).map_err(|e| Error::Data(format!("cannot open dataset '{}': {e}", path.display())))?;
    let mut data = read_dataset(file)?;
    data.estimate_missing_variances(None)?;
    Ok(data)
}

pub fn write_dataset<W: Write>(data: &Dataset, writer: W) -> Result<()> {
    let mut w = csv::Writer::from_writer(writer);
    for s in &data.series {
        for (k, &t) in s.times.iter().enumerate() {
            for (r, &v) in s.replicates[k].iter().enumerate() {
                w.serialize(Row {
                    condition_id: s.condition_id.clone(),
                    observable: s.observable.clone(),
                    time: t,
                    replicate: r,
                    value: v,
                    variance: s.variance,
                })?;
            }
        }
    }
    w.flush()?;
    Ok(())
}

pub fn save_dataset(data: &Dataset, path: impl AsRef<Path>) -> Result<()> {
    write_dataset(data, std::fs::File::create(path)?)
}

#[cfg(test)]
mod tests {
    use super::*;

    const HIV_STYLE: &str = "\
condition_id,observable,time,replicate,value
I=0,C,1,0,10
I=0,C,1,1,12
I=0,C,1,2,11
I=0,C,1,3,15
I=0,C,2,0,20
I=0,C,2,1,22
I=0,C,2,2,21
I=0,C,2,3,21
";

    #[test]
    fn hand_computed_variance() {
        let d = {
            let mut d = read_dataset(HIV_STYLE.as_bytes()).unwrap();
            d.estimate_missing_variances(None).unwrap();
            d
        };
        // t=1: mean 12, squares 4+0+1+9=14 → 14/3; t=2: mean 21, 1+1+0+0=2 → 2/3.
        let expected = (14.0 / 3.0 + 2.0 / 3.0) / 2.0;
        assert!((d.series[0].variance.unwrap() - expected).abs() < 1e-12);
    }

    #[test]
    fn empty_table() {
        let err = read_dataset("condition_id,observable,time,replicate,value\n".as_bytes()).unwrap_err();
        assert!(err.to_string().contains("no observations"), "{err}");
    }

    #[test]
    fn malformed_row_names_line() {
        let text = "condition_id,observable,time,replicate,value\na,x,1,0,2\na,x,oops,1,2\n";
        let err = read_dataset(text.as_bytes()).unwrap_err();
        assert!(err.to_string().contains("line 3"), "{err}");
        assert_eq!(err.exit_code(), 4);
    }

    #[test]
    fn duplicate_replicate() {
        let text = "condition_id,observable,time,replicate,value\na,x,1,0,2\na,x,1,0,3\n";
        assert!(read_dataset(text.as_bytes()).is_err());
    }

    #[test]
    fn single_replicate_needs_variance() {
        let text = "condition_id,observable,time,replicate,value\na,x,1,0,2\n";
        let mut d = read_dataset(text.as_bytes()).unwrap();
        match d.estimate_missing_variances(None).unwrap_err() {
            Error::Noise { observable, condition, .. } => {
                assert_eq!((observable.as_str(), condition.as_str()), ("x", "a"))
            }
            other => panic!("{other:?}"),
        }
        let text = "condition_id,observable,time,replicate,value,variance\na,x,1,0,2,0.5\n";
        assert_eq!(read_dataset(text.as_bytes()).unwrap().series[0].variance, Some(0.5));
    }

    #[test]
    fn round_trip_is_exact() {
        let mut d = Dataset::default();
        for k in 0..5 {
            d.push("c", "x", k as f64 * 0.1, (k as f64 * 1.234567891).sin() / 3.0);
            d.push("c", "x", k as f64 * 0.1, 1.0 / (k as f64 + 7.0));
        }
        d.find_mut("c", "x").unwrap().variance = Some(0.1 + 0.2);
        let mut buf = Vec::new();
        write_dataset(&d, &mut buf).unwrap();
        assert_eq!(read_dataset(buf.as_slice()).unwrap(), d);
    }
}
