use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};

use ndarray::Array2;

use super::{Dataset, PointCloud, Split};
use crate::error::{Error, Result};

const MAGIC: &[u8; 4] = b"PMC1";
const HEADER_LEN: usize = 12;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum CloudFormat {
    /// One point per line, whitespace-separated reals, `#` comments.
    XyzText,
    /// `PMC1` magic, little-endian u32 rows and columns, then row-major f32.
    PackedBinary,
}

impl CloudFormat {
    /// `.pmc` and `.bin` are binary; everything else is read as text.
    pub fn from_path(path: &Path) -> CloudFormat {
        match path.extension().and_then(|e| e.to_str()) {
            Some("pmc") | Some("bin") => CloudFormat::PackedBinary,
            _ => CloudFormat::XyzText,
        }
    }
}

pub fn load_cloud(path: &Path, format: CloudFormat) -> Result<PointCloud> {
    let points = match format {
        CloudFormat::XyzText => {
            let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
            parse_xyz(&text)?
        }
        CloudFormat::PackedBinary => {
            let bytes = fs::read(path).map_err(|e| Error::io(path, e))?;
            let m = decode_packed(&bytes)?;
            if m.ncols() != 3 {
                return Err(Error::Format(format!(
                    "{}: expected 3 columns, header says {}",
                    path.display(),
                    m.ncols()
                )));
            }
            m
        }
    };
    let id = path
        .file_stem()
        .map(|s| s.to_string_lossy().into_owned())
        .unwrap_or_default();
    PointCloud::new(points, None, id)
}

pub fn save_cloud(cloud: &PointCloud, path: &Path, format: CloudFormat) -> Result<()> {
    let bytes = match format {
        CloudFormat::XyzText => format_xyz(&cloud.points).into_bytes(),
        CloudFormat::PackedBinary => encode_packed(&cloud.points),
    };
    write_atomic(path, &bytes)
}

pub(crate) fn parse_xyz(text: &str) -> Result<Array2<f64>> {
    let mut flat = Vec::new();
    for (lineno, raw) in text.lines().enumerate() {
        let line = raw.split('#').next().unwrap_or("").trim();
        if line.is_empty() {
            continue;
        }
        let fields: Vec<&str> = line.split_whitespace().collect();
        if fields.len() != 3 {
            return Err(Error::Parse {
                line: lineno + 1,
                message: format!("expected 3 values, found {}", fields.len()),
            });
        }
        for f in fields {
            let v: f64 = f.parse().map_err(|_| Error::Parse {
                line: lineno + 1,
                message: format!("invalid number '{f}'"),
            })?;
            flat.push(v);
        }
    }
    let n = flat.len() / 3;
    Ok(Array2::from_shape_vec((n, 3), flat).expect("three values per row"))
}

fn format_xyz(points: &Array2<f64>) -> String {
    let mut out = String::with_capacity(points.nrows() * 48);
    for row in points.rows() {
        // shortest round-trip representation
        out.push_str(&format!("{} {} {}\n", row[0], row[1], row[2]));
    }
    out
}

/// Encodes an arbitrary-width matrix into the packed container.
pub(crate) fn encode_packed(values: &Array2<f64>) -> Vec<u8> {
    let mut bytes = Vec::with_capacity(HEADER_LEN + values.len() * 4);
    bytes.extend_from_slice(MAGIC);
    bytes.extend_from_slice(&(values.nrows() as u32).to_le_bytes());
    bytes.extend_from_slice(&(values.ncols() as u32).to_le_bytes());
    for &v in values.iter() {
        bytes.extend_from_slice(&(v as f32).to_le_bytes());
    }
    bytes
}

pub(crate) fn decode_packed(bytes: &[u8]) -> Result<Array2<f64>> {
    if bytes.len() < HEADER_LEN || &bytes[..4] != MAGIC {
        return Err(Error::Format("missing PMC1 header".into()));
    }
    let n = u32::from_le_bytes(bytes[4..8].try_into().unwrap()) as usize;
    let dim = u32::from_le_bytes(bytes[8..12].try_into().unwrap()) as usize;
    let payload = &bytes[HEADER_LEN..];
    if payload.len() != n * dim * 4 {
        return Err(Error::Format(format!(
            "header declares {n} x {dim} values but payload holds {} bytes",
            payload.len()
        )));
    }
    let flat: Vec<f64> = payload
        .chunks_exact(4)
        .map(|c| f32::from_le_bytes(c.try_into().unwrap()) as f64)
        .collect();
    Ok(Array2::from_shape_vec((n, dim), flat).expect("payload size checked"))
}

pub(crate) fn write_atomic(path: &Path, bytes: &[u8]) -> Result<()> {
    if let Some(parent) = path.parent() {
        if !parent.as_os_str().is_empty() {
            fs::create_dir_all(parent).map_err(|e| Error::io(parent, e))?;
        }
    }
    let tmp = path.with_extension("tmp");
    let mut file = fs::File::create(&tmp).map_err(|e| Error::io(&tmp, e))?;
    file.write_all(bytes).map_err(|e| Error::io(&tmp, e))?;
    drop(file);
    fs::rename(&tmp, path).map_err(|e| Error::io(path, e))
}

/// One `<path>,<label>,<split>` line of a dataset manifest.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ManifestEntry {
    pub path: PathBuf,
    pub label: usize,
    pub split: Split,
}

/// Reads a manifest; relative cloud paths are resolved against the
/// manifest's directory.
pub fn load_manifest(path: &Path) -> Result<Vec<ManifestEntry>> {
    let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    let base = path.parent().unwrap_or(Path::new(""));
    let mut entries = Vec::new();
    for (lineno, raw) in text.lines().enumerate() {
        let line = raw.trim();
        if line.is_empty() || line.starts_with('#') {
            continue;
        }
        let parse_err = |message: String| Error::Parse {
            line: lineno + 1,
            message,
        };
        let fields: Vec<&str> = line.split(',').map(str::trim).collect();
        if fields.len() != 3 {
            return Err(parse_err(format!(
                "expected <path>,<label>,<split>, got '{line}'"
            )));
        }
        let label = fields[1]
            .parse()
            .map_err(|_| parse_err(format!("invalid label '{}'", fields[1])))?;
        let split = fields[2]
            .parse()
            .map_err(|e: Error| parse_err(e.to_string()))?;
        let p = Path::new(fields[0]);
        entries.push(ManifestEntry {
            path: if p.is_absolute() {
                p.to_path_buf()
            } else {
                base.join(p)
            },
            label,
            split,
        });
    }
    Ok(entries)
}

/// Writes manifest lines with paths as given (callers pass paths relative to
/// the manifest directory).
pub fn save_manifest(entries: &[ManifestEntry], path: &Path) -> Result<()> {
    let mut out = String::new();
    for e in entries {
        out.push_str(&format!("{},{},{}\n", e.path.display(), e.label, e.split));
    }
    write_atomic(path, out.as_bytes())
}

/// Name of the optional class-name list stored next to a manifest, one
/// name per line in label order.
pub const CLASS_NAMES_FILE: &str = "classes.txt";

/// Loads every cloud listed in a manifest. Cloud ids are file stems; class
/// names come from `classes.txt` beside the manifest when present.
pub fn load_dataset(manifest: &Path) -> Result<Dataset> {
    let entries = load_manifest(manifest)?;
    if entries.is_empty() {
        return Err(Error::InvalidInput(format!(
            "manifest {} lists no clouds",
            manifest.display()
        )));
    }
    let names_path = manifest
        .parent()
        .unwrap_or(Path::new(""))
        .join(CLASS_NAMES_FILE);
    let class_names: Vec<String> = if names_path.exists() {
        let text = fs::read_to_string(&names_path).map_err(|e| Error::io(&names_path, e))?;
        text.lines()
            .map(str::trim)
            .filter(|l| !l.is_empty())
            .map(String::from)
            .collect()
    } else {
        let classes = entries.iter().map(|e| e.label).max().unwrap_or(0) + 1;
        (0..classes).map(|c| format!("class_{c}")).collect()
    };
    let mut clouds = Vec::with_capacity(entries.len());
    for e in &entries {
        let mut cloud = load_cloud(&e.path, CloudFormat::from_path(&e.path))?;
        cloud.label = Some(e.label);
        cloud.id = e
            .path
            .file_stem()
            .map(|s| s.to_string_lossy().into_owned())
            .unwrap_or_else(|| e.path.display().to_string());
        clouds.push(cloud);
    }
    Dataset::new(
        clouds,
        class_names,
        entries.iter().map(|e| e.split).collect(),
    )
}

/// Writes clouds under `dir/clouds/`, then `dir/manifest.csv` and
/// `dir/classes.txt`. Returns the manifest path.
pub fn save_dataset(dataset: &Dataset, dir: &Path, format: CloudFormat) -> Result<PathBuf> {
    let ext = match format {
        CloudFormat::XyzText => "xyz",
        CloudFormat::PackedBinary => "pmc",
    };
    let mut entries = Vec::with_capacity(dataset.clouds.len());
    for (cloud, &split) in dataset.clouds.iter().zip(&dataset.splits) {
        let relative = PathBuf::from("clouds").join(format!("{}.{ext}", cloud.id));
        save_cloud(cloud, &dir.join(&relative), format)?;
        entries.push(ManifestEntry {
            path: relative,
            label: cloud.label.unwrap_or(0),
            split,
        });
    }
    let mut names = dataset.class_names.join("\n");
    names.push('\n');
    write_atomic(&dir.join(CLASS_NAMES_FILE), names.as_bytes())?;
    let manifest = dir.join("manifest.csv");
    save_manifest(&entries, &manifest)?;
    Ok(manifest)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn dataset_round_trip() {
        let dir = tempfile::tempdir().unwrap();
        let ds = crate::pointset::generate_dataset(3, 5, 20, 0.01, 2).unwrap();
        for format in [CloudFormat::XyzText, CloudFormat::PackedBinary] {
            let sub = dir.path().join(format!("{format:?}"));
            let manifest = save_dataset(&ds, &sub, format).unwrap();
            let back = load_dataset(&manifest).unwrap();
            assert_eq!(back.class_names, ds.class_names);
            assert_eq!(back.splits, ds.splits);
            for (a, b) in back.clouds.iter().zip(&ds.clouds) {
                assert_eq!(a.id, b.id);
                assert_eq!(a.label, b.label);
                if format == CloudFormat::XyzText {
                    assert_eq!(a.points, b.points);
                }
            }
        }
    }
    use proptest::prelude::*;

    #[test]
    fn text_two_points() {
        let m = parse_xyz("1 2 3\n4 5 6\n").unwrap();
        assert_eq!(m, ndarray::arr2(&[[1.0, 2.0, 3.0], [4.0, 5.0, 6.0]]));
    }

    #[test]
    fn text_comments_and_blank_lines() {
        let m = parse_xyz("# header\n\n1 2 3 # trailing\n  4\t5 6\n").unwrap();
        assert_eq!(m.nrows(), 2);
    }

    #[test]
    fn text_arity_error_reports_line() {
        match parse_xyz("1 2\n") {
            Err(Error::Parse { line, .. }) => assert_eq!(line, 1),
            other => panic!("expected parse error, got {other:?}"),
        }
        match parse_xyz("1 2 3\n4 x 6\n") {
            Err(Error::Parse { line, .. }) => assert_eq!(line, 2),
            other => panic!("expected parse error, got {other:?}"),
        }
    }

    #[test]
    fn binary_round_trip_is_bit_exact() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("c.pmc");
        let cloud =
            PointCloud::from_rows(&[[0.5, -1.25, 3.0], [1e-3, 2.0, -0.0], [7.0, 8.5, 9.75]])
                .unwrap();
        save_cloud(&cloud, &path, CloudFormat::PackedBinary).unwrap();
        let loaded = load_cloud(&path, CloudFormat::PackedBinary).unwrap();
        // the container stores f32: values are quantized once, then stable
        for (a, b) in cloud.points.iter().zip(loaded.points.iter()) {
            assert_eq!((*a as f32 as f64).to_bits(), b.to_bits());
        }
        save_cloud(&loaded, &path, CloudFormat::PackedBinary).unwrap();
        let again = load_cloud(&path, CloudFormat::PackedBinary).unwrap();
        for (a, b) in loaded.points.iter().zip(again.points.iter()) {
            assert_eq!(a.to_bits(), b.to_bits());
        }
    }

    #[test]
    fn binary_count_mismatch_is_format_error() {
        let mut bytes = encode_packed(&ndarray::arr2(&[[1.0, 2.0, 3.0]]));
        bytes[4] = 2;
        assert!(matches!(decode_packed(&bytes), Err(Error::Format(_))));
        assert!(matches!(decode_packed(b"XXXX"), Err(Error::Format(_))));
    }

    #[test]
    fn manifest_round_trip() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("manifest.txt");
        let entries = vec![
            ManifestEntry {
                path: "a.xyz".into(),
                label: 0,
                split: Split::Train,
            },
            ManifestEntry {
                path: "b.xyz".into(),
                label: 3,
                split: Split::Test,
            },
        ];
        save_manifest(&entries, &path).unwrap();
        let loaded = load_manifest(&path).unwrap();
        assert_eq!(loaded.len(), 2);
        assert_eq!(loaded[1].label, 3);
        assert_eq!(loaded[1].split, Split::Test);
        assert_eq!(loaded[0].path, dir.path().join("a.xyz"));
    }

    #[test]
    fn manifest_bad_split() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("m.txt");
        fs::write(&path, "a.xyz,0,train\nb.xyz,1,validate\n").unwrap();
        assert!(matches!(
            load_manifest(&path),
            Err(Error::Parse { line: 2, .. })
        ));
    }

    proptest! {
        #[test]
        fn text_round_trip_exact(rows in proptest::collection::vec(
            proptest::array::uniform3(-1e6f64..1e6), 1..20)) {
            let cloud = PointCloud::from_rows(&rows).unwrap();
            let parsed = parse_xyz(&format_xyz(&cloud.points)).unwrap();
            prop_assert_eq!(parsed, cloud.points);
        }
    }
}
