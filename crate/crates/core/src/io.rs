//! Signal CSV files and time-frequency exports (CSV and 16-bit PGM).
//!
//! Signal files hold one of three layouts, optionally preceded by `#`
//! metadata lines (`# sample_rate=<Hz>`, `# t0=<s>`) and a header row:
//!
//! * `value`: requires `# sample_rate=`
//! * `time,value`
//! * `time,re,im`

use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::Path;

use rustfft::num_complex::Complex64;

use crate::error::{Error, Result};
use crate::matrix::Matrix;
use crate::signal::Signal;

/// Relative tolerance on the sampling step of a time column.
const STEP_TOLERANCE: f64 = 1e-6;

/// Dynamic range mapped onto the gray levels of a PGM export, in dB.
pub const PGM_RANGE_DB: f64 = 60.0;

fn parse_error(path: &Path, line: u64, message: impl Into<String>) -> Error {
    Error::Parse {
        path: path.to_path_buf(),
        line,
        message: message.into(),
    }
}

#[derive(Debug, Default)]
struct Metadata {
    sample_rate: Option<f64>,
    t0: Option<f64>,
}

fn read_metadata(path: &Path, text: &str) -> Result<Metadata> {
    let mut meta = Metadata::default();
    for (i, line) in text.lines().enumerate() {
        let Some(body) = line.trim_start().strip_prefix('#') else {
            continue;
        };
        let Some((key, value)) = body.split_once('=') else {
            continue;
        };
        let slot = match key.trim() {
            "sample_rate" => &mut meta.sample_rate,
            "t0" => &mut meta.t0,
            _ => continue,
        };
        let v: f64 = value
            .trim()
            .parse()
            .map_err(|_| parse_error(path, i as u64 + 1, format!("bad {} value", key.trim())))?;
        *slot = Some(v);
    }
    Ok(meta)
}

/// Read a signal from CSV. Two or three columns carry a time axis that must
/// be strictly increasing and uniformly spaced.
pub fn read_signal_csv(path: impl AsRef<Path>) -> Result<Signal> {
    let path = path.as_ref();
    let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    let meta = read_metadata(path, &text)?;

    let mut reader = csv::ReaderBuilder::new()
        .has_headers(false)
        .flexible(true)
        .comment(Some(b'#'))
        .trim(csv::Trim::All)
        .from_reader(text.as_bytes());

    let mut rows: Vec<(u64, Vec<f64>)> = Vec::new();
    let mut width = None;
    for record in reader.records() {
        let record = record.map_err(|e| {
            let line = e.position().map_or(0, |p| p.line());
            parse_error(path, line, e.to_string())
        })?;
        let line = record.position().map_or(0, |p| p.line());
        if record.iter().all(str::is_empty) {
            continue;
        }
        let parsed: std::result::Result<Vec<f64>, _> =
            record.iter().map(str::parse::<f64>).collect();
        let values = match parsed {
            Ok(v) => v,
            // a single non-numeric leading row is a header
            Err(_) if rows.is_empty() && width.is_none() => {
                width = Some(record.len());
                continue;
            }
            Err(_) => return Err(parse_error(path, line, "non-numeric field")),
        };
        let expected = *width.get_or_insert(values.len());
        if values.len() != expected {
            return Err(parse_error(
                path,
                line,
                format!("expected {expected} fields, found {}", values.len()),
            ));
        }
        if values.iter().any(|v| !v.is_finite()) {
            return Err(parse_error(path, line, "non-finite value"));
        }
        rows.push((line, values));
    }

    if rows.is_empty() {
        return Err(parse_error(path, 1, "no samples"));
    }
    if rows.len() < 2 {
        return Err(parse_error(path, rows[0].0, "a signal needs at least two samples"));
    }

    let to_signal = |r: Result<Signal>| r.map_err(|e| parse_error(path, rows[0].0, e.to_string()));
    match rows[0].1.len() {
        1 => {
            let fs = meta
                .sample_rate
                .ok_or_else(|| parse_error(path, 1, "one-column files need `# sample_rate=`"))?;
            let samples = rows.iter().map(|(_, v)| v[0]).collect();
            to_signal(Signal::from_real(samples, fs, meta.t0.unwrap_or(0.0)))
        }
        2 | 3 => {
            let times: Vec<f64> = rows.iter().map(|(_, v)| v[0]).collect();
            let step = check_time_axis(path, &rows, &times)?;
            let fs = meta.sample_rate.unwrap_or(1.0 / step);
            if (fs * step - 1.0).abs() > STEP_TOLERANCE {
                return Err(parse_error(
                    path,
                    1,
                    format!("sample_rate={fs} disagrees with the time step {step}"),
                ));
            }
            let t0 = times[0];
            if rows[0].1.len() == 2 {
                let samples = rows.iter().map(|(_, v)| v[1]).collect();
                to_signal(Signal::from_real(samples, fs, t0))
            } else {
                let samples = rows.iter().map(|(_, v)| Complex64::new(v[1], v[2])).collect();
                to_signal(Signal::from_complex(samples, fs, t0))
            }
        }
        n => Err(parse_error(path, rows[0].0, format!("expected 1 to 3 columns, found {n}"))),
    }
}

fn check_time_axis(path: &Path, rows: &[(u64, Vec<f64>)], times: &[f64]) -> Result<f64> {
    if let Some(i) = times.windows(2).position(|w| w[1] <= w[0]) {
        return Err(parse_error(path, rows[i + 1].0, "time is not strictly increasing"));
    }
    let step = (times[times.len() - 1] - times[0]) / (times.len() - 1) as f64;
    for (i, w) in times.windows(2).enumerate() {
        let tol = STEP_TOLERANCE * step + 4.0 * f64::EPSILON * w[1].abs();
        if (w[1] - w[0] - step).abs() > tol {
            return Err(parse_error(path, rows[i + 1].0, "time axis is not uniformly sampled"));
        }
    }
    Ok(step)
}

/// Write a signal as `time,value` (real) or `time,re,im` (complex) with a
/// `# sample_rate=` line. Values use shortest round-trip formatting.
pub fn write_signal_csv(signal: &Signal, path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    let io = |e| Error::io(path, e);
    let mut out = BufWriter::new(File::create(path).map_err(io)?);
    writeln!(out, "# sample_rate={}", signal.sample_rate()).map_err(io)?;
    writeln!(out, "# t0={}", signal.t0()).map_err(io)?;
    let mut w = csv::Writer::from_writer(out);
    let csv_err = |e: csv::Error| Error::io(path, std::io::Error::other(e));
    if signal.is_real() {
        w.write_record(["time", "value"]).map_err(csv_err)?;
        for (t, z) in signal.times().iter().zip(signal.samples()) {
            w.write_record([t.to_string(), z.re.to_string()]).map_err(csv_err)?;
        }
    } else {
        w.write_record(["time", "re", "im"]).map_err(csv_err)?;
        for (t, z) in signal.times().iter().zip(signal.samples()) {
            w.write_record([t.to_string(), z.re.to_string(), z.im.to_string()])
                .map_err(csv_err)?;
        }
    }
    w.flush().map_err(io)
}

/// Output format of [`export_tf`].
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum TfFormat {
    Csv,
    Pgm,
}

impl TfFormat {
    /// Format implied by a file extension.
    pub fn from_path(path: &Path) -> Result<Self> {
        match path.extension().and_then(|e| e.to_str()) {
            Some("csv") => Ok(TfFormat::Csv),
            Some("pgm") => Ok(TfFormat::Pgm),
            _ => Err(Error::config(
                "output",
                format!("cannot infer csv or pgm from {}", path.display()),
            )),
        }
    }
}

/// A magnitude plane with its axes.
#[derive(Debug, Clone, PartialEq)]
pub struct TfTable {
    pub magnitude: Matrix<f64>,
    pub times: Vec<f64>,
    pub freqs: Vec<f64>,
}

/// Write a magnitude plane (rows = time, columns = frequency).
pub fn export_tf(table: &TfTable, path: impl AsRef<Path>, format: TfFormat) -> Result<()> {
    let (rows, cols) = table.magnitude.shape();
    if rows != table.times.len() || cols != table.freqs.len() {
        return Err(Error::domain("axes do not match the matrix shape"));
    }
    if table.magnitude.as_slice().iter().any(|v| !v.is_finite()) {
        return Err(Error::domain("cannot export non-finite magnitudes"));
    }
    match format {
        TfFormat::Csv => write_tf_csv(table, path.as_ref()),
        TfFormat::Pgm => write_pgm(&table.magnitude, path.as_ref()),
    }
}

fn write_tf_csv(table: &TfTable, path: &Path) -> Result<()> {
    let file = File::create(path).map_err(|e| Error::io(path, e))?;
    let mut w = csv::Writer::from_writer(BufWriter::new(file));
    let csv_err = |e: csv::Error| Error::io(path, std::io::Error::other(e));
    let header = std::iter::once("time".to_string()).chain(table.freqs.iter().map(f64::to_string));
    w.write_record(header).map_err(csv_err)?;
    for (n, t) in table.times.iter().enumerate() {
        let row = std::iter::once(t.to_string())
            .chain(table.magnitude.row(n).iter().map(f64::to_string));
        w.write_record(row).map_err(csv_err)?;
    }
    w.flush().map_err(|e| Error::io(path, e))
}

/// Read a table written by [`export_tf`] in CSV form.
pub fn read_tf_csv(path: impl AsRef<Path>) -> Result<TfTable> {
    let path = path.as_ref();
    let file = File::open(path).map_err(|e| Error::io(path, e))?;
    let mut reader = csv::ReaderBuilder::new().has_headers(false).from_reader(file);
    let mut records = reader.records();
    let field = |s: &str, line: u64| -> Result<f64> {
        s.parse().map_err(|_| parse_error(path, line, format!("bad number `{s}`")))
    };
    let header = records
        .next()
        .ok_or_else(|| parse_error(path, 1, "empty file"))?
        .map_err(|e| parse_error(path, 1, e.to_string()))?;
    let freqs = header.iter().skip(1).map(|s| field(s, 1)).collect::<Result<Vec<_>>>()?;
    let mut times = Vec::new();
    let mut data = Vec::new();
    for record in records {
        let record = record.map_err(|e| {
            parse_error(path, e.position().map_or(0, |p| p.line()), e.to_string())
        })?;
        let line = record.position().map_or(0, |p| p.line());
        let mut it = record.iter();
        times.push(field(it.next().unwrap_or(""), line)?);
        for s in it {
            data.push(field(s, line)?);
        }
    }
    Ok(TfTable {
        magnitude: Matrix::from_vec(times.len(), freqs.len(), data),
        times,
        freqs,
    })
}

/// Gray levels of a PGM image: `(freqs, times)` with the highest frequency
/// in the first image row. Magnitudes map to dB relative to the maximum,
/// clipped at [`PGM_RANGE_DB`] below it.
pub fn pgm_levels(mag: &Matrix<f64>) -> Matrix<u16> {
    let (rows, cols) = mag.shape();
    let peak = mag.as_slice().iter().fold(0.0f64, |a, &v| a.max(v.abs()));
    let mut img = Matrix::filled(cols, rows, 0u16);
    if peak == 0.0 {
        return img;
    }
    for n in 0..rows {
        for m in 0..cols {
            let v = mag.get(n, m).abs();
            let level = if v > 0.0 {
                let db = (20.0 * (v / peak).log10()).max(-PGM_RANGE_DB);
                ((db + PGM_RANGE_DB) / PGM_RANGE_DB * f64::from(u16::MAX)).round() as u16
            } else {
                0
            };
            *img.get_mut(cols - 1 - m, n) = level;
        }
    }
    img
}

fn write_pgm(mag: &Matrix<f64>, path: &Path) -> Result<()> {
    let img = pgm_levels(mag);
    let io = |e| Error::io(path, e);
    let mut out = BufWriter::new(File::create(path).map_err(io)?);
    write!(out, "P5\n{} {}\n{}\n", img.cols(), img.rows(), u16::MAX).map_err(io)?;
    for v in img.as_slice() {
        out.write_all(&v.to_be_bytes()).map_err(io)?;
    }
    out.flush().map_err(io)
}

/// Read a 16-bit binary PGM as written by [`export_tf`].
pub fn read_pgm(path: impl AsRef<Path>) -> Result<Matrix<u16>> {
    let path = path.as_ref();
    let bytes = std::fs::read(path).map_err(|e| Error::io(path, e))?;
    let mut fields = Vec::with_capacity(4);
    let mut pos = 0;
    while fields.len() < 4 {
        while pos < bytes.len() && bytes[pos].is_ascii_whitespace() {
            pos += 1;
        }
        let start = pos;
        while pos < bytes.len() && !bytes[pos].is_ascii_whitespace() {
            pos += 1;
        }
        if start == pos {
            return Err(parse_error(path, 1, "truncated PGM header"));
        }
        fields.push(String::from_utf8_lossy(&bytes[start..pos]).into_owned());
    }
    pos += 1;
    if fields[0] != "P5" {
        return Err(parse_error(path, 1, "not a binary PGM"));
    }
    let num = |s: &str| -> Result<usize> {
        s.parse().map_err(|_| parse_error(path, 1, format!("bad header field `{s}`")))
    };
    let (width, height, maxval) = (num(&fields[1])?, num(&fields[2])?, num(&fields[3])?);
    if maxval < 256 {
        return Err(parse_error(path, 1, "expected a 16-bit PGM"));
    }
    let body = &bytes[pos.min(bytes.len())..];
    if body.len() != 2 * width * height {
        return Err(parse_error(path, 1, "pixel data length does not match the header"));
    }
    let data = body.chunks_exact(2).map(|c| u16::from_be_bytes([c[0], c[1]])).collect();
    Ok(Matrix::from_vec(height, width, data))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::signal::Builtin;

    fn write(dir: &tempfile::TempDir, name: &str, body: &str) -> std::path::PathBuf {
        let p = dir.path().join(name);
        std::fs::write(&p, body).unwrap();
        p
    }

    fn parse_line(r: Result<Signal>) -> u64 {
        match r {
            Err(Error::Parse { line, .. }) => line,
            other => panic!("expected a parse error, got {other:?}"),
        }
    }

    #[test]
    fn round_trip_is_exact() {
        let dir = tempfile::tempdir().unwrap();
        let s = Builtin::TwoChirp.signal();
        let p = dir.path().join("s.csv");
        write_signal_csv(&s, &p).unwrap();
        let back = read_signal_csv(&p).unwrap();
        assert_eq!(back.len(), s.len());
        assert_eq!(back.sample_rate(), s.sample_rate());
        assert!(back.is_real());
        for (a, b) in s.samples().iter().zip(back.samples()) {
            assert!((a - b).norm() <= 1e-12);
        }
    }

    #[test]
    fn complex_round_trip() {
        let dir = tempfile::tempdir().unwrap();
        let samples = (0..50).map(|n| Complex64::from_polar(1.0, 0.3 * n as f64)).collect();
        let s = Signal::from_complex(samples, 100.0, 0.25).unwrap();
        let p = dir.path().join("c.csv");
        write_signal_csv(&s, &p).unwrap();
        let back = read_signal_csv(&p).unwrap();
        assert!(!back.is_real());
        assert_eq!(back.t0(), 0.25);
        assert_eq!(back.samples(), s.samples());
    }

    #[test]
    fn single_column_needs_sample_rate() {
        let dir = tempfile::tempdir().unwrap();
        let ok = write(&dir, "a.csv", "# sample_rate=8\nvalue\n1\n2\n3\n");
        let s = read_signal_csv(&ok).unwrap();
        assert_eq!(s.sample_rate(), 8.0);
        assert_eq!(s.real_part(), vec![1.0, 2.0, 3.0]);
        let bad = write(&dir, "b.csv", "1\n2\n3\n");
        assert_eq!(parse_line(read_signal_csv(&bad)), 1);
    }

    #[test]
    fn malformed_files_report_the_line() {
        let dir = tempfile::tempdir().unwrap();
        let empty = write(&dir, "e.csv", "");
        assert!(matches!(read_signal_csv(&empty), Err(Error::Parse { .. })));
        let ragged = write(&dir, "r.csv", "time,value\n0,1\n0.1,2\n0.2\n");
        assert_eq!(parse_line(read_signal_csv(&ragged)), 4);
        let backwards = write(&dir, "m.csv", "0,1\n0.1,2\n0.05,3\n");
        assert_eq!(parse_line(read_signal_csv(&backwards)), 3);
        let uneven = write(&dir, "u.csv", "0,1\n0.1,2\n0.25,3\n0.3,4\n");
        assert!(matches!(read_signal_csv(&uneven), Err(Error::Parse { .. })));
        let text = write(&dir, "t.csv", "0,1\n0.1,x\n");
        assert_eq!(parse_line(read_signal_csv(&text)), 2);
    }

    #[test]
    fn accepts_microsecond_sampling() {
        let dir = tempfile::tempdir().unwrap();
        let mut body = String::from("time,value\n");
        for n in 0..400 {
            let t = n as f64 * 7e-6;
            body.push_str(&format!("{t:.9},{}\n", (n as f64 * 0.1).sin()));
        }
        let p = write(&dir, "bat.csv", &body);
        let s = read_signal_csv(&p).unwrap();
        assert_eq!(s.len(), 400);
        assert!((s.sample_rate() - 142_857.142_857).abs() < 1e-3);
    }

    #[test]
    fn tf_csv_round_trip() {
        let dir = tempfile::tempdir().unwrap();
        let mag = Matrix::from_vec(3, 2, vec![0.1, 1.0 / 3.0, 2.5e-7, 0.0, 1e5, 7.25]);
        let table = TfTable {
            magnitude: mag,
            times: vec![0.0, 0.5, 1.0],
            freqs: vec![0.0, 10.0],
        };
        let p = dir.path().join("tf.csv");
        export_tf(&table, &p, TfFormat::Csv).unwrap();
        let back = read_tf_csv(&p).unwrap();
        assert_eq!(back.times, table.times);
        assert_eq!(back.freqs, table.freqs);
        for (a, b) in back.magnitude.as_slice().iter().zip(table.magnitude.as_slice()) {
            assert!((a - b).abs() <= 1e-9);
        }
    }

    #[test]
    fn zero_matrix_is_black() {
        let dir = tempfile::tempdir().unwrap();
        let table = TfTable {
            magnitude: Matrix::filled(4, 3, 0.0),
            times: vec![0.0, 1.0, 2.0, 3.0],
            freqs: vec![0.0, 1.0, 2.0],
        };
        let p = dir.path().join("z.pgm");
        export_tf(&table, &p, TfFormat::Pgm).unwrap();
        let img = read_pgm(&p).unwrap();
        assert_eq!(img.shape(), (3, 4));
        assert!(img.as_slice().iter().all(|&v| v == 0));
    }

    #[test]
    fn pgm_orientation() {
        // single bright cell at the last time and lowest frequency
        let mut mag = Matrix::filled(4, 3, 0.0);
        *mag.get_mut(3, 0) = 2.0;
        *mag.get_mut(0, 2) = 2e-3;
        let img = pgm_levels(&mag);
        assert_eq!(*img.get(2, 3), u16::MAX);
        // -60 dB sits exactly on black
        assert_eq!(*img.get(0, 0), 0);
        assert_eq!(img.as_slice().iter().filter(|&&v| v > 0).count(), 1);
    }

    #[test]
    fn unwritable_path_is_io_error() {
        let table = TfTable {
            magnitude: Matrix::filled(1, 1, 1.0),
            times: vec![0.0],
            freqs: vec![0.0],
        };
        let r = export_tf(&table, "/nonexistent-dir/x.pgm", TfFormat::Pgm);
        assert!(matches!(r, Err(Error::Io { .. })));
    }
}
