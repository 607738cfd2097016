//! Complex baseband signals, the cancellation metric, and dataset handling.
//!
//! A self-interference dataset pairs the transmitted baseband signal `tx`
//! with the received signal `rx`, sampled synchronously. All cancellers in
//! this crate consume these two signals plus a contiguous train/validation/
//! test split.

use std::fs::File;
use std::io::{BufReader, BufWriter, Read, Write};
use std::ops::{Deref, Range};
use std::path::Path;

use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// A finite, non-empty complex baseband signal.
///
/// Finiteness and non-emptiness are checked once at construction so the
/// numeric code never has to re-validate.
#[derive(Debug, Clone, PartialEq)]
pub struct ComplexSignal {
    samples: Vec<Complex64>,
}

impl ComplexSignal {
    pub fn new(samples: Vec<Complex64>) -> Result<Self> {
        if samples.is_empty() {
            return Err(Error::EmptySignal);
        }
        for (i, s) in samples.iter().enumerate() {
            if !s.re.is_finite() || !s.im.is_finite() {
                return Err(Error::NonFinite { index: i });
            }
        }
        Ok(Self { samples })
    }

    /// Internal constructor for samples we produced ourselves.
    pub(crate) fn from_computed(samples: Vec<Complex64>) -> Self {
        debug_assert!(!samples.is_empty());
        debug_assert!(samples.iter().all(|s| s.re.is_finite() && s.im.is_finite()));
        Self { samples }
    }

    pub fn len(&self) -> usize {
        self.samples.len()
    }

    pub fn is_empty(&self) -> bool {
        false // by construction
    }

    /// `x[n - lag]`, reading zero before the start of the signal.
    ///
    /// This boundary rule is shared by fitting, prediction, and quantization
    /// so that every consumer sees the same lagged regressors.
    pub fn lagged(&self, n: usize, lag: usize) -> Complex64 {
        if lag > n {
            Complex64::new(0.0, 0.0)
        } else {
            self.samples[n - lag]
        }
    }

    pub fn samples(&self) -> &[Complex64] {
        &self.samples
    }

    pub fn into_samples(self) -> Vec<Complex64> {
        self.samples
    }
}

impl Deref for ComplexSignal {
    type Target = [Complex64];

    fn deref(&self) -> &[Complex64] {
        &self.samples
    }
}

/// Cancellation achieved by `estimate` against `received`, in dB:
///
/// `10 * log10( sum |y[n]|^2 / sum |y[n] - yhat[n]|^2 )`
///
/// Both slices must be equally long and non-empty; slice the full signals
/// with the evaluation range at the call site. A bit-exact estimate yields
/// `f64::INFINITY` (serialized as `"inf"` by [`format_db`]); a received
/// signal with zero energy is an error because the ratio is undefined.
pub fn cancellation_db(received: &[Complex64], estimate: &[Complex64]) -> Result<f64> {
    if received.len() != estimate.len() {
        return Err(Error::MismatchedLengths {
            left: received.len(),
            right: estimate.len(),
        });
    }
    if received.is_empty() {
        return Err(Error::EmptyRange);
    }
    let mut received_energy = 0.0;
    let mut residual_energy = 0.0;
    for (y, yhat) in received.iter().zip(estimate) {
        received_energy += y.norm_sqr();
        residual_energy += (y - yhat).norm_sqr();
    }
    if received_energy == 0.0 {
        return Err(Error::ZeroReceivedEnergy);
    }
    if residual_energy == 0.0 {
        return Ok(f64::INFINITY);
    }
    Ok(10.0 * (received_energy / residual_energy).log10())
}

/// Renders a dB value for reports: finite values with six decimals,
/// perfect cancellation as `"inf"`, failed evaluations as `"nan"`.
pub fn format_db(db: f64) -> String {
    if db.is_nan() {
        "nan".to_string()
    } else if db == f64::INFINITY {
        "inf".to_string()
    } else if db == f64::NEG_INFINITY {
        "-inf".to_string()
    } else {
        format!("{db:.6}")
    }
}

/// Contiguous, non-overlapping train/validation/test index ranges.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct SplitRanges {
    pub train: Range<usize>,
    pub validation: Range<usize>,
    pub test: Range<usize>,
}

impl SplitRanges {
    pub fn total(&self) -> usize {
        self.test.end
    }
}

/// Splits `n` samples 80/10/10 into contiguous train/validation/test ranges.
///
/// Sizes are `floor(0.8 n)` and `floor(0.1 n)`, with the remainder going to
/// the test range, in signal order (earliest samples train). Errors if any
/// range would be empty.
pub fn split_80_10_10(n: usize) -> Result<SplitRanges> {
    let train_len = (n as f64 * 0.8).floor() as usize;
    let val_len = (n as f64 * 0.1).floor() as usize;
    let test_len = n - train_len - val_len;
    if train_len == 0 || val_len == 0 || test_len == 0 {
        return Err(Error::SplitTooSmall { n });
    }
    Ok(SplitRanges {
        train: 0..train_len,
        validation: train_len..train_len + val_len,
        test: train_len + val_len..n,
    })
}

/// On-disk encodings for a tx/rx dataset.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum DatasetFormat {
    /// Header `tx_re,tx_im,rx_re,rx_im`, one decimal-float row per sample.
    Csv,
    /// Raw little-endian `f64`, interleaved `tx_re, tx_im, rx_re, rx_im`.
    RawF64Le,
}

impl DatasetFormat {
    /// Picks the format from a file extension: `.csv` is CSV, anything
    /// else is treated as raw `f64`.
    pub fn from_path(path: &Path) -> DatasetFormat {
        match path.extension().and_then(|e| e.to_str()) {
            Some(ext) if ext.eq_ignore_ascii_case("csv") => DatasetFormat::Csv,
            _ => DatasetFormat::RawF64Le,
        }
    }
}

/// A synchronized tx/rx pair with its 80/10/10 split.
#[derive(Debug, Clone)]
pub struct SiDataset {
    pub tx: ComplexSignal,
    pub rx: ComplexSignal,
    pub split: SplitRanges,
}

impl SiDataset {
    /// Builds a dataset from equal-length signals; at least 10 samples are
    /// needed for a non-degenerate split.
    pub fn new(tx: ComplexSignal, rx: ComplexSignal) -> Result<Self> {
        if tx.len() != rx.len() {
            return Err(Error::MismatchedLengths {
                left: tx.len(),
                right: rx.len(),
            });
        }
        let split = split_80_10_10(tx.len())?;
        Ok(Self { tx, rx, split })
    }

    pub fn len(&self) -> usize {
        self.tx.len()
    }

    pub fn is_empty(&self) -> bool {
        false
    }

    pub fn load(path: &Path, format: DatasetFormat) -> Result<Self> {
        let (tx, rx) = match format {
            DatasetFormat::Csv => read_csv(path)?,
            DatasetFormat::RawF64Le => read_raw(path)?,
        };
        SiDataset::new(ComplexSignal::new(tx)?, ComplexSignal::new(rx)?)
    }

    pub fn save(&self, path: &Path, format: DatasetFormat) -> Result<()> {
        match format {
            DatasetFormat::Csv => write_csv(path, &self.tx, &self.rx),
            DatasetFormat::RawF64Le => write_raw(path, &self.tx, &self.rx),
        }
    }
}

fn read_csv(path: &Path) -> Result<(Vec<Complex64>, Vec<Complex64>)> {
    let mut reader = csv::Reader::from_path(path)?;
    {
        let headers = reader.headers()?;
        let expected = ["tx_re", "tx_im", "rx_re", "rx_im"];
        let got: Vec<&str> = headers.iter().map(str::trim).collect();
        if got != expected {
            return Err(Error::MalformedDataset(format!(
                "expected header {expected:?}, got {got:?}"
            )));
        }
    }
    let mut tx = Vec::new();
    let mut rx = Vec::new();
    for (i, record) in reader.records().enumerate() {
        let record = record?;
        if record.len() != 4 {
            return Err(Error::MalformedDataset(format!(
                "row {} has {} fields, expected 4",
                i + 1,
                record.len()
            )));
        }
        let mut vals = [0.0f64; 4];
        for (k, field) in record.iter().enumerate() {
            vals[k] = field.trim().parse::<f64>().map_err(|e| {
                Error::MalformedDataset(format!("row {}: bad float {field:?}: {e}", i + 1))
            })?;
        }
        tx.push(Complex64::new(vals[0], vals[1]));
        rx.push(Complex64::new(vals[2], vals[3]));
    }
    Ok((tx, rx))
}

fn write_csv(path: &Path, tx: &ComplexSignal, rx: &ComplexSignal) -> Result<()> {
    let mut w = BufWriter::new(File::create(path)?);
    writeln!(w, "tx_re,tx_im,rx_re,rx_im")?;
    for (t, r) in tx.iter().zip(rx.iter()) {
        writeln!(w, "{},{},{},{}", t.re, t.im, r.re, r.im)?;
    }
    w.flush()?;
    Ok(())
}

fn read_raw(path: &Path) -> Result<(Vec<Complex64>, Vec<Complex64>)> {
    let mut bytes = Vec::new();
    BufReader::new(File::open(path)?).read_to_end(&mut bytes)?;
    if bytes.len() % 32 != 0 {
        return Err(Error::MalformedDataset(format!(
            "raw file holds {} bytes; expected a multiple of 32 (four f64 per sample)",
            bytes.len()
        )));
    }
    let mut tx = Vec::new();
    let mut rx = Vec::new();
    for chunk in bytes.chunks_exact(32) {
        let mut vals = [0.0f64; 4];
        for (k, b) in chunk.chunks_exact(8).enumerate() {
            vals[k] = f64::from_le_bytes(b.try_into().unwrap());
        }
        tx.push(Complex64::new(vals[0], vals[1]));
        rx.push(Complex64::new(vals[2], vals[3]));
    }
    Ok((tx, rx))
}

fn write_raw(path: &Path, tx: &ComplexSignal, rx: &ComplexSignal) -> Result<()> {
    let mut w = BufWriter::new(File::create(path)?);
    for (t, r) in tx.iter().zip(rx.iter()) {
        for v in [t.re, t.im, r.re, r.im] {
            w.write_all(&v.to_le_bytes())?;
        }
    }
    w.flush()?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    fn c(re: f64, im: f64) -> Complex64 {
        Complex64::new(re, im)
    }

    #[test]
    fn cancellation_matches_hand_computation() {
        // sum |y|^2 = 2, sum |y - yhat|^2 = 0.02 -> 10 log10(100) = 20 dB
        let y = [c(1.0, 0.0), c(0.0, 1.0)];
        let yhat = [c(0.9, 0.0), c(0.0, 0.9)];
        let db = cancellation_db(&y, &yhat).unwrap();
        assert!((db - 20.0).abs() < 1e-9, "got {db}");
    }

    #[test]
    fn zero_estimate_gives_exactly_zero_db() {
        let y = [c(0.3, -0.4), c(-1.5, 2.0), c(0.0, 0.25)];
        let zeros = [c(0.0, 0.0); 3];
        assert_eq!(cancellation_db(&y, &zeros).unwrap(), 0.0);
    }

    #[test]
    fn perfect_estimate_is_infinite() {
        let y = [c(1.0, 2.0), c(-0.5, 0.125)];
        let db = cancellation_db(&y, &y).unwrap();
        assert_eq!(db, f64::INFINITY);
        assert_eq!(format_db(db), "inf");
    }

    #[test]
    fn zero_received_energy_is_an_error() {
        let y = [c(0.0, 0.0); 4];
        let yhat = [c(1.0, 0.0); 4];
        assert!(matches!(
            cancellation_db(&y, &yhat),
            Err(Error::ZeroReceivedEnergy)
        ));
        // error wins even when the residual is also zero
        assert!(matches!(
            cancellation_db(&y, &y),
            Err(Error::ZeroReceivedEnergy)
        ));
    }

    #[test]
    fn length_mismatch_and_empty_are_errors() {
        let y = [c(1.0, 0.0)];
        assert!(matches!(
            cancellation_db(&y, &[]),
            Err(Error::MismatchedLengths { .. })
        ));
        assert!(matches!(cancellation_db(&[], &[]), Err(Error::EmptyRange)));
    }

    #[test]
    fn split_sizes_follow_floor_remainder_rule() {
        let s = split_80_10_10(20480).unwrap();
        assert_eq!(s.train, 0..16384);
        assert_eq!(s.validation, 16384..18432);
        assert_eq!(s.test, 18432..20480);

        let s = split_80_10_10(10).unwrap();
        assert_eq!(s.train, 0..8);
        assert_eq!(s.validation, 8..9);
        assert_eq!(s.test, 9..10);

        assert!(matches!(split_80_10_10(5), Err(Error::SplitTooSmall { n: 5 })));
        assert!(matches!(split_80_10_10(0), Err(Error::SplitTooSmall { .. })));
    }

    #[test]
    fn split_covers_everything_without_overlap() {
        for n in 10..200 {
            let s = split_80_10_10(n).unwrap();
            assert_eq!(s.train.start, 0);
            assert_eq!(s.train.end, s.validation.start);
            assert_eq!(s.validation.end, s.test.start);
            assert_eq!(s.test.end, n);
            assert!(!s.train.is_empty() && !s.validation.is_empty() && !s.test.is_empty());
        }
    }

    #[test]
    fn lagged_reads_zero_before_start() {
        let x = ComplexSignal::new(vec![c(1.0, 0.0), c(2.0, 0.0), c(3.0, 0.0)]).unwrap();
        assert_eq!(x.lagged(0, 0), c(1.0, 0.0));
        assert_eq!(x.lagged(0, 1), c(0.0, 0.0));
        assert_eq!(x.lagged(2, 1), c(2.0, 0.0));
        assert_eq!(x.lagged(1, 2), c(0.0, 0.0));
    }

    #[test]
    fn signal_rejects_non_finite_and_empty() {
        assert!(matches!(ComplexSignal::new(vec![]), Err(Error::EmptySignal)));
        let bad = vec![c(1.0, 0.0), c(f64::NAN, 0.0)];
        assert!(matches!(
            ComplexSignal::new(bad),
            Err(Error::NonFinite { index: 1 })
        ));
        let inf = vec![c(0.0, f64::INFINITY)];
        assert!(matches!(
            ComplexSignal::new(inf),
            Err(Error::NonFinite { index: 0 })
        ));
    }

    #[test]
    fn csv_and_raw_round_trip_bit_exactly() {
        let tx = ComplexSignal::new(vec![
            c(0.125, -3.5),
            c(1.0e-17, 2.0),
            c(-0.3333333333333333, 0.1),
            c(4.0, 5.0),
            c(1.0, -1.0),
            c(0.5, 0.5),
            c(-2.0, 0.25),
            c(0.75, -0.125),
            c(3.0, 3.0),
            c(-1.5, 2.5),
        ])
        .unwrap();
        let rx = ComplexSignal::new(tx.iter().map(|v| v * c(0.5, 0.25)).collect()).unwrap();
        let ds = SiDataset::new(tx, rx).unwrap();

        let dir = tempfile::tempdir().unwrap();
        for format in [DatasetFormat::Csv, DatasetFormat::RawF64Le] {
            let path = dir.path().join(match format {
                DatasetFormat::Csv => "ds.csv",
                DatasetFormat::RawF64Le => "ds.bin",
            });
            ds.save(&path, format).unwrap();
            assert_eq!(DatasetFormat::from_path(&path), format);
            let back = SiDataset::load(&path, format).unwrap();
            assert_eq!(back.tx.samples(), ds.tx.samples(), "{format:?} tx");
            assert_eq!(back.rx.samples(), ds.rx.samples(), "{format:?} rx");
            assert_eq!(back.split, ds.split);
        }
    }

    #[test]
    fn malformed_inputs_are_rejected() {
        let dir = tempfile::tempdir().unwrap();

        let bad_header = dir.path().join("h.csv");
        std::fs::write(&bad_header, "a,b,c,d\n1,2,3,4\n").unwrap();
        assert!(matches!(
            SiDataset::load(&bad_header, DatasetFormat::Csv),
            Err(Error::MalformedDataset(_))
        ));

        let bad_float = dir.path().join("f.csv");
        std::fs::write(&bad_float, "tx_re,tx_im,rx_re,rx_im\n1,2,x,4\n").unwrap();
        assert!(matches!(
            SiDataset::load(&bad_float, DatasetFormat::Csv),
            Err(Error::MalformedDataset(_))
        ));

        let bad_raw = dir.path().join("r.bin");
        std::fs::write(&bad_raw, [0u8; 33]).unwrap();
        assert!(matches!(
            SiDataset::load(&bad_raw, DatasetFormat::RawF64Le),
            Err(Error::MalformedDataset(_))
        ));
    }

    mod properties {
        use super::*;
        use proptest::prelude::*;

        proptest! {
            // Scaling both signals by the same factor leaves the metric
            // unchanged: the ratio is scale free.
            #[test]
            fn scale_invariance(
                scale in 1e-3f64..1e3,
                pairs in prop::collection::vec((-1e3f64..1e3, -1e3f64..1e3, -1e3f64..1e3, -1e3f64..1e3), 1..50)
            ) {
                let y: Vec<Complex64> = pairs.iter().map(|&(a, b, _, _)| Complex64::new(a, b)).collect();
                let yhat: Vec<Complex64> = pairs.iter().map(|&(_, _, a, b)| Complex64::new(a, b)).collect();
                let base = cancellation_db(&y, &yhat);
                let ys: Vec<Complex64> = y.iter().map(|v| v * scale).collect();
                let yhats: Vec<Complex64> = yhat.iter().map(|v| v * scale).collect();
                let scaled = cancellation_db(&ys, &yhats);
                match (base, scaled) {
                    (Ok(a), Ok(b)) => {
                        if a.is_finite() && b.is_finite() {
                            prop_assert!((a - b).abs() < 1e-9, "{} vs {}", a, b);
                        } else {
                            prop_assert_eq!(a.is_infinite(), b.is_infinite());
                        }
                    }
                    (Err(_), Err(_)) => {}
                    other => prop_assert!(false, "inconsistent: {:?}", other),
                }
            }

            #[test]
            fn zero_estimate_always_zero_db(
                pairs in prop::collection::vec((-1e3f64..1e3, -1e3f64..1e3), 1..50)
            ) {
                let y: Vec<Complex64> = pairs.iter().map(|&(a, b)| Complex64::new(a, b)).collect();
                let zeros = vec![Complex64::new(0.0, 0.0); y.len()];
                if y.iter().any(|v| v.norm_sqr() > 0.0) {
                    prop_assert_eq!(cancellation_db(&y, &zeros).unwrap(), 0.0);
                }
            }
        }
    }
}
