//! Text records written next to every run: metrics and history CSV,
//! `key=value` certificates and persisted split indices.

use std::collections::BTreeMap;
use std::fs;
use std::path::Path;
use std::str::FromStr;

use ttp_core::certify::{CertMethod, Certificate};
use ttp_core::finetune::{History, HistoryRow};
use ttp_core::metrics::{MetricRow, SplitTag};

use crate::FormatError;

fn write_text(path: &Path, text: &str) -> Result<(), FormatError> {
    fs::write(path, text).map_err(|e| FormatError::io(path, e))
}

fn read_text(path: &Path) -> Result<String, FormatError> {
    fs::read_to_string(path).map_err(|e| FormatError::io(path, e))
}

fn parse_field<T: FromStr>(field: &str, name: &str, line: usize) -> Result<T, FormatError> {
    field
        .trim()
        .parse()
        .map_err(|_| FormatError::msg(format!("line {line}: cannot parse {name} from `{field}`")))
}

fn csv_reader<'a>(text: &'a str, header: &str) -> Result<csv::Reader<&'a [u8]>, FormatError> {
    let mut rdr = csv::ReaderBuilder::new()
        .has_headers(true)
        .from_reader(text.as_bytes());
    let got = rdr.headers().map_err(|e| FormatError::msg(e.to_string()))?;
    let want: Vec<&str> = header.split(',').collect();
    if got.iter().collect::<Vec<_>>() != want {
        return Err(FormatError::msg(format!(
            "line 1: expected header `{header}`"
        )));
    }
    Ok(rdr)
}

pub fn metrics_csv(rows: &[MetricRow]) -> String {
    let mut s = format!("{}\n", MetricRow::CSV_HEADER);
    for r in rows {
        s.push_str(&format!("{r}\n"));
    }
    s
}

pub fn parse_metrics_csv(text: &str) -> Result<Vec<MetricRow>, FormatError> {
    let mut out = Vec::new();
    for (i, rec) in csv_reader(text, MetricRow::CSV_HEADER)?
        .records()
        .enumerate()
    {
        let line = i + 2;
        let rec = rec.map_err(|e| FormatError::msg(format!("line {line}: {e}")))?;
        if rec.len() != 5 {
            return Err(FormatError::msg(format!(
                "line {line}: expected 5 fields, found {}",
                rec.len()
            )));
        }
        out.push(MetricRow {
            split: parse_field::<SplitTag>(&rec[0], "split", line)?,
            n: parse_field(&rec[1], "n", line)?,
            accuracy: parse_field(&rec[2], "accuracy", line)?,
            conf_dist_mean: parse_field(&rec[3], "conf_dist", line)?,
            l2_uniformity_mean: parse_field(&rec[4], "l2_uniformity", line)?,
        });
    }
    Ok(out)
}

/// History CSV; an absent test accuracy is written as an empty field.
pub fn history_csv(history: &History) -> String {
    let mut s = format!("{}\n", History::CSV_HEADER);
    for r in &history.rows {
        let test = r.test_acc.map(|t| format!("{t:?}")).unwrap_or_default();
        s.push_str(&format!(
            "{},{:?},{},{:?},{:?},{:?}\n",
            r.epoch, r.retain_acc, test, r.conf_dist, r.l_k, r.l_a
        ));
    }
    s
}

pub fn parse_history_csv(text: &str) -> Result<Vec<HistoryRow>, FormatError> {
    let mut out = Vec::new();
    for (i, rec) in csv_reader(text, History::CSV_HEADER)?.records().enumerate() {
        let line = i + 2;
        let rec = rec.map_err(|e| FormatError::msg(format!("line {line}: {e}")))?;
        if rec.len() != 6 {
            return Err(FormatError::msg(format!(
                "line {line}: expected 6 fields, found {}",
                rec.len()
            )));
        }
        let test_acc = if rec[2].trim().is_empty() {
            None
        } else {
            Some(parse_field(&rec[2], "test_acc", line)?)
        };
        out.push(HistoryRow {
            epoch: parse_field(&rec[0], "epoch", line)?,
            retain_acc: parse_field(&rec[1], "retain_acc", line)?,
            test_acc,
            conf_dist: parse_field(&rec[3], "conf_dist", line)?,
            l_k: parse_field(&rec[4], "L_K", line)?,
            l_a: parse_field(&rec[5], "L_A", line)?,
        });
    }
    Ok(out)
}

pub fn certificate_text(cert: &Certificate) -> String {
    cert.to_pairs()
        .into_iter()
        .map(|(k, v)| format!("{k}={v}\n"))
        .collect()
}

/// Parses [`certificate_text`]. Keys must be unique and known.
pub fn parse_certificate(text: &str) -> Result<Certificate, FormatError> {
    let mut kv = BTreeMap::new();
    for (i, line) in text.lines().enumerate() {
        if line.trim().is_empty() {
            continue;
        }
        let (k, v) = line
            .split_once('=')
            .ok_or_else(|| FormatError::msg(format!("line {}: expected key=value", i + 1)))?;
        if kv
            .insert(k.trim().to_string(), (v.trim().to_string(), i + 1))
            .is_some()
        {
            return Err(FormatError::msg(format!(
                "line {}: duplicate key `{k}`",
                i + 1
            )));
        }
    }
    let mut get = |key: &str| -> Result<(String, usize), FormatError> {
        kv.remove(key)
            .ok_or_else(|| FormatError::msg(format!("missing key `{key}`")))
    };
    fn num<T: FromStr>((v, line): (String, usize), name: &str) -> Result<T, FormatError> {
        parse_field(&v, name, line)
    }
    let method_name = get("method")?.0;
    let method = match method_name.as_str() {
        "exact_hessian" => CertMethod::ExactHessian,
        "estimator" | "online" => {
            let n = num(get("n")?, "n")?;
            let b = num(get("b")?, "b")?;
            let j_bound = num(get("j_bound")?, "j_bound")?;
            let rho = num(get("rho")?, "rho")?;
            if method_name == "online" {
                CertMethod::Online {
                    k: num(get("k")?, "k")?,
                    n,
                    b,
                    j_bound,
                    rho,
                }
            } else {
                CertMethod::Estimator { n, b, j_bound, rho }
            }
        }
        other => return Err(FormatError::msg(format!("unknown method `{other}`"))),
    };
    let cert = Certificate {
        epsilon: num(get("epsilon")?, "epsilon")?,
        delta: num(get("delta")?, "delta")?,
        theta: num(get("theta")?, "theta")?,
        lambda: num(get("lambda")?, "lambda")?,
        c_bound: num(get("c_bound")?, "c_bound")?,
        delta_bound: num(get("delta_bound")?, "delta_bound")?,
        sigma: num(get("sigma")?, "sigma")?,
        sigma_override: num(get("sigma_override")?, "sigma_override")?,
        lambda_min: num(get("lambda_min")?, "lambda_min")?,
        method,
        seed: num(get("seed")?, "seed")?,
        g_bound: kv
            .remove("g_bound")
            .map(|p| num(p, "g_bound"))
            .transpose()?,
        zeta_min: kv
            .remove("zeta_min")
            .map(|p| num(p, "zeta_min"))
            .transpose()?,
    };
    if let Some((k, (_, line))) = kv.into_iter().next() {
        return Err(FormatError::msg(format!("line {line}: unknown key `{k}`")));
    }
    Ok(cert)
}

/// `forget=` and `retain=` lines of comma-separated dataset indices.
pub fn split_text(forget: &[usize], retain: &[usize]) -> String {
    let join = |v: &[usize]| {
        v.iter()
            .map(|i| i.to_string())
            .collect::<Vec<_>>()
            .join(",")
    };
    format!("forget={}\nretain={}\n", join(forget), join(retain))
}

pub fn parse_split(text: &str) -> Result<(Vec<usize>, Vec<usize>), FormatError> {
    let (mut forget, mut retain) = (None, None);
    for (i, line) in text.lines().enumerate() {
        if line.trim().is_empty() {
            continue;
        }
        let (k, v) = line
            .split_once('=')
            .ok_or_else(|| FormatError::msg(format!("line {}: expected key=value", i + 1)))?;
        let idx = v
            .split(',')
            .filter(|s| !s.trim().is_empty())
            .map(|s| parse_field(s, "index", i + 1))
            .collect::<Result<Vec<usize>, _>>()?;
        let slot = match k.trim() {
            "forget" => &mut forget,
            "retain" => &mut retain,
            other => {
                return Err(FormatError::msg(format!(
                    "line {}: unknown key `{other}`",
                    i + 1
                )))
            }
        };
        if slot.replace(idx).is_some() {
            return Err(FormatError::msg(format!(
                "line {}: duplicate key `{}`",
                i + 1,
                k.trim()
            )));
        }
    }
    match (forget, retain) {
        (Some(f), Some(r)) => Ok((f, r)),
        _ => Err(FormatError::msg(
            "split file needs forget= and retain= lines",
        )),
    }
}

pub fn write_metrics(path: &Path, rows: &[MetricRow]) -> Result<(), FormatError> {
    write_text(path, &metrics_csv(rows))
}

pub fn read_metrics(path: &Path) -> Result<Vec<MetricRow>, FormatError> {
    parse_metrics_csv(&read_text(path)?).map_err(|e| e.in_file(path))
}

pub fn write_history(path: &Path, history: &History) -> Result<(), FormatError> {
    write_text(path, &history_csv(history))
}

pub fn read_history(path: &Path) -> Result<Vec<HistoryRow>, FormatError> {
    parse_history_csv(&read_text(path)?).map_err(|e| e.in_file(path))
}

pub fn write_certificate(path: &Path, cert: &Certificate) -> Result<(), FormatError> {
    write_text(path, &certificate_text(cert))
}

pub fn read_certificate(path: &Path) -> Result<Certificate, FormatError> {
    parse_certificate(&read_text(path)?).map_err(|e| e.in_file(path))
}

pub fn write_split(path: &Path, forget: &[usize], retain: &[usize]) -> Result<(), FormatError> {
    write_text(path, &split_text(forget, retain))
}

pub fn read_split(path: &Path) -> Result<(Vec<usize>, Vec<usize>), FormatError> {
    parse_split(&read_text(path)?).map_err(|e| e.in_file(path))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn cert(method: CertMethod) -> Certificate {
        Certificate {
            epsilon: 0.5,
            delta: 0.05,
            theta: 0.75,
            lambda: 1e-4,
            c_bound: 10.0,
            delta_bound: 123.456,
            sigma: 0.1 + 0.2,
            sigma_override: false,
            lambda_min: 0.0,
            method,
            seed: 7,
            g_bound: Some(2.5),
            zeta_min: None,
        }
    }

    #[test]
    fn certificate_round_trip() {
        for m in [
            CertMethod::ExactHessian,
            CertMethod::Estimator {
                n: 47,
                b: 2,
                j_bound: 3.0,
                rho: 0.1,
            },
            CertMethod::Online {
                k: 3,
                n: 5,
                b: 1,
                j_bound: 3.0,
                rho: 0.1,
            },
        ] {
            let c = cert(m);
            let text = certificate_text(&c);
            let keys: Vec<&str> = text.lines().map(|l| l.split('=').next().unwrap()).collect();
            let mut sorted = keys.clone();
            sorted.sort_unstable();
            assert_eq!(keys, sorted);
            assert_eq!(parse_certificate(&text).unwrap(), c);
        }
        let mut overridden = cert(CertMethod::ExactHessian);
        overridden.epsilon = f64::NAN;
        let back = parse_certificate(&certificate_text(&overridden)).unwrap();
        assert!(back.epsilon.is_nan());
        assert!(parse_certificate("method=exact_hessian\nbogus=1\n").is_err());
    }

    #[test]
    fn csv_round_trip() {
        let rows = vec![
            MetricRow {
                split: SplitTag::Retain,
                n: 3,
                accuracy: 2.0 / 3.0,
                conf_dist_mean: 0.1,
                l2_uniformity_mean: 0.3,
            },
            MetricRow {
                split: SplitTag::Forget,
                n: 1,
                accuracy: 0.0,
                conf_dist_mean: 0.0,
                l2_uniformity_mean: 1e-17,
            },
        ];
        assert_eq!(parse_metrics_csv(&metrics_csv(&rows)).unwrap(), rows);
        let hist = History {
            rows: vec![
                HistoryRow {
                    epoch: 0,
                    retain_acc: 0.9,
                    test_acc: None,
                    conf_dist: 0.8,
                    l_k: 1.0,
                    l_a: 2.0,
                },
                HistoryRow {
                    epoch: 1,
                    retain_acc: 0.8,
                    test_acc: Some(0.7),
                    conf_dist: 0.1,
                    l_k: 0.5,
                    l_a: 2.5,
                },
            ],
            ..History::default()
        };
        assert_eq!(parse_history_csv(&history_csv(&hist)).unwrap(), hist.rows);
        assert!(parse_metrics_csv("split,n\nretain,1\n").is_err());
    }

    #[test]
    fn split_round_trip() {
        let (f, r) = (vec![4, 1], vec![0, 2, 3]);
        assert_eq!(parse_split(&split_text(&f, &r)).unwrap(), (f, r));
        assert!(parse_split("forget=1\n").is_err());
        assert!(parse_split("forget=1\nretain=x\n").is_err());
    }
}
