//! Aesthetic-prototype database: attribute-file curation, identity
//! storage, and nearest-neighbor search by cosine similarity over the
//! 80-dimensional identity block.
//!
//! Expression, texture, pose, and lighting are stored alongside each
//! identity for later reconstruction but never participate in search.

use std::collections::HashSet;
use std::path::Path;

use byteorder::{LittleEndian, ReadBytesExt, WriteBytesExt};

use crate::error::{Error, Result};
use crate::morphable::{ParamVector, ALPHA_DIM, PARAM_DIM};
use crate::parallel;

/// Magic prefix of the database format; trailing two bytes are the
/// version.
pub const DB_MAGIC: &[u8; 8] = b"NNSGDB01";

/// The 40 CelebA attribute names in canonical order.
pub const CELEBA_ATTRIBUTE_NAMES: [&str; 40] = [
    "5_o_Clock_Shadow",
    "Arched_Eyebrows",
    "Attractive",
    "Bags_Under_Eyes",
    "Bald",
    "Bangs",
    "Big_Lips",
    "Big_Nose",
    "Black_Hair",
    "Blond_Hair",
    "Blurry",
    "Brown_Hair",
    "Bushy_Eyebrows",
    "Chubby",
    "Double_Chin",
    "Eyeglasses",
    "Goatee",
    "Gray_Hair",
    "Heavy_Makeup",
    "High_Cheekbones",
    "Male",
    "Mouth_Slightly_Open",
    "Mustache",
    "Narrow_Eyes",
    "No_Beard",
    "Oval_Face",
    "Pale_Skin",
    "Pointy_Nose",
    "Receding_Hairline",
    "Rosy_Cheeks",
    "Sideburns",
    "Smiling",
    "Straight_Hair",
    "Wavy_Hair",
    "Wearing_Earrings",
    "Wearing_Hat",
    "Wearing_Lipstick",
    "Wearing_Necklace",
    "Wearing_Necktie",
    "Young",
];

/// Attributes a prototype must have.
pub const DEFAULT_INCLUDE: [&str; 2] = ["Attractive", "Young"];

/// Attributes that disqualify a prototype.
pub const DEFAULT_EXCLUDE: [&str; 9] = [
    "Bags_Under_Eyes",
    "Bald",
    "Big_Nose",
    "Blurry",
    "Chubby",
    "Double_Chin",
    "Eyeglasses",
    "Narrow_Eyes",
    "Wearing_Hat",
];

const N_ATTRIBUTES: usize = 40;

/// One row of a parsed attribute table.
#[derive(Debug, Clone, PartialEq)]
pub struct AttributeRow {
    pub filename: String,
    /// Exactly 40 flags, each +1 or -1.
    pub flags: Vec<i8>,
}

/// Parsed CelebA-style annotation file.
#[derive(Debug, Clone, PartialEq)]
pub struct AttributeTable {
    image_count: usize,
    attribute_names: Vec<String>,
    rows: Vec<AttributeRow>,
}

impl AttributeTable {
    pub fn new(names: Vec<String>, rows: Vec<(String, Vec<i8>)>) -> Result<Self> {
        if names.len() != N_ATTRIBUTES {
            return Err(Error::DimensionMismatch {
                what: "attribute names".into(),
                expected: N_ATTRIBUTES,
                actual: names.len(),
            });
        }
        let mut out = Vec::with_capacity(rows.len());
        for (filename, flags) in rows {
            if flags.len() != N_ATTRIBUTES {
                return Err(Error::DimensionMismatch {
                    what: format!("flags for {filename}"),
                    expected: N_ATTRIBUTES,
                    actual: flags.len(),
                });
            }
            if flags.iter().any(|f| *f != 1 && *f != -1) {
                return Err(Error::Parse {
                    line: 0,
                    message: format!("non-±1 flag in row {filename}"),
                });
            }
            out.push(AttributeRow { filename, flags });
        }
        Ok(AttributeTable {
            image_count: out.len(),
            attribute_names: names,
            rows: out,
        })
    }

    pub fn image_count(&self) -> usize {
        self.image_count
    }

    pub fn attribute_names(&self) -> &[String] {
        &self.attribute_names
    }

    pub fn rows(&self) -> &[AttributeRow] {
        &self.rows
    }

    /// Serializes back to the CelebA text layout.
    pub fn to_celeba_text(&self) -> String {
        let mut out = String::new();
        out.push_str(&format!("{}\n", self.rows.len()));
        out.push_str(&self.attribute_names.join(" "));
        out.push('\n');
        for row in &self.rows {
            out.push_str(&row.filename);
            for f in &row.flags {
                out.push_str(&format!(" {f}"));
            }
            out.push('\n');
        }
        out
    }
}

/// Parses the CelebA `list_attr` layout: a count line, a header line
/// of 40 attribute names, then one row per image of a filename and 40
/// whitespace-separated ±1 flags. Trailing blank lines are ignored.
pub fn parse_attribute_table(text: &str) -> Result<AttributeTable> {
    let mut lines = text.lines().enumerate();

    let (count_line_no, count_line) = lines
        .next()
        .ok_or_else(|| Error::Parse {
            line: 1,
            message: "empty attribute file".into(),
        })?;
    let declared: usize = count_line.trim().parse().map_err(|_| Error::Parse {
        line: count_line_no + 1,
        message: format!("expected an image count, found {:?}", count_line.trim()),
    })?;

    let (_, header) = lines.next().ok_or_else(|| Error::Parse {
        line: 2,
        message: "missing attribute header line".into(),
    })?;
    let names: Vec<String> = header.split_whitespace().map(str::to_string).collect();
    if names.len() != N_ATTRIBUTES {
        return Err(Error::Parse {
            line: 2,
            message: format!("expected {N_ATTRIBUTES} attribute names, found {}", names.len()),
        });
    }

    let mut rows = Vec::with_capacity(declared);
    for (idx, line) in lines {
        let line_no = idx + 1;
        if line.trim().is_empty() {
            continue;
        }
        let mut tokens = line.split_whitespace();
        let filename = tokens.next().expect("non-empty line has a first token").to_string();
        let mut flags = Vec::with_capacity(N_ATTRIBUTES);
        for token in tokens {
            match token {
                "1" | "+1" => flags.push(1i8),
                "-1" => flags.push(-1i8),
                other => {
                    return Err(Error::Parse {
                        line: line_no,
                        message: format!("flag value {other:?} is not ±1"),
                    })
                }
            }
        }
        if flags.len() != N_ATTRIBUTES {
            return Err(Error::Parse {
                line: line_no,
                message: format!(
                    "row {filename:?} has {} flags, expected {N_ATTRIBUTES}",
                    flags.len()
                ),
            });
        }
        rows.push(AttributeRow { filename, flags });
    }

    if rows.len() != declared {
        return Err(Error::Parse {
            line: 1,
            message: format!("count line declares {declared} rows, found {}", rows.len()),
        });
    }

    Ok(AttributeTable {
        image_count: declared,
        attribute_names: names,
        rows,
    })
}

fn resolve_attrs(table: &AttributeTable, names: &[String]) -> Result<Vec<usize>> {
    names
        .iter()
        .map(|n| {
            table
                .attribute_names
                .iter()
                .position(|x| x == n)
                .ok_or_else(|| Error::UnknownAttribute {
                    name: n.clone(),
                    valid: table.attribute_names.clone(),
                })
        })
        .collect()
}

/// Selects filenames whose include attributes are all +1 and exclude
/// attributes all -1, preserving input order.
pub fn filter_prototypes(
    table: &AttributeTable,
    include: &[String],
    exclude: &[String],
) -> Result<Vec<String>> {
    let inc = resolve_attrs(table, include)?;
    let exc = resolve_attrs(table, exclude)?;
    Ok(table
        .rows
        .iter()
        .filter(|row| {
            inc.iter().all(|&j| row.flags[j] == 1) && exc.iter().all(|&j| row.flags[j] == -1)
        })
        .map(|row| row.filename.clone())
        .collect())
}

/// One face in the prototype database.
#[derive(Debug, Clone, PartialEq)]
pub struct PrototypeRecord {
    pub id: String,
    pub params: ParamVector,
}

/// Immutable, searchable collection of prototypes with precomputed
/// identity norms.
#[derive(Debug, Clone, PartialEq)]
pub struct PrototypeDatabase {
    records: Vec<PrototypeRecord>,
    alpha_norms: Vec<f64>,
}

fn euclidean_norm(v: &[f64]) -> f64 {
    v.iter().map(|x| x * x).sum::<f64>().sqrt()
}

/// Validates records and precomputes identity norms. Insertion order
/// is preserved.
pub fn build_database(records: Vec<PrototypeRecord>) -> Result<PrototypeDatabase> {
    if records.is_empty() {
        return Err(Error::EmptyDatabase);
    }
    let mut seen = HashSet::new();
    for r in &records {
        if r.id.is_empty() {
            return Err(Error::EmptyId);
        }
        if !seen.insert(r.id.as_str()) {
            return Err(Error::DuplicateId { id: r.id.clone() });
        }
    }
    let alpha_norms: Vec<f64> = records
        .iter()
        .map(|r| euclidean_norm(r.params.alpha()))
        .collect();
    for (r, n) in records.iter().zip(&alpha_norms) {
        if *n == 0.0 {
            return Err(Error::ZeroNorm {
                what: format!("alpha of record {:?}", r.id),
            });
        }
    }
    Ok(PrototypeDatabase {
        records,
        alpha_norms,
    })
}

impl PrototypeDatabase {
    pub fn len(&self) -> usize {
        self.records.len()
    }

    pub fn is_empty(&self) -> bool {
        self.records.is_empty()
    }

    pub fn records(&self) -> &[PrototypeRecord] {
        &self.records
    }

    pub fn record(&self, index: usize) -> &PrototypeRecord {
        &self.records[index]
    }

    pub fn alpha_norms(&self) -> &[f64] {
        &self.alpha_norms
    }

    /// Writes the little-endian binary database format: magic
    /// `NNSGDB01`, `u32` record count, then per record a `u16` id
    /// length, the id bytes, and 239 `f32` parameter values in
    /// alpha/beta/delta/pose/gamma order.
    pub fn save(&self, path: &Path) -> Result<()> {
        let mut out = Vec::new();
        out.extend_from_slice(DB_MAGIC);
        out.write_u32::<LittleEndian>(self.records.len() as u32)
            .expect("writing to Vec cannot fail");
        for r in &self.records {
            let id_bytes = r.id.as_bytes();
            if id_bytes.len() > u16::MAX as usize {
                return Err(Error::IdTooLong {
                    len: id_bytes.len(),
                });
            }
            out.write_u16::<LittleEndian>(id_bytes.len() as u16)
                .expect("writing to Vec cannot fail");
            out.extend_from_slice(id_bytes);
            for v in r.params.flatten() {
                out.write_f32::<LittleEndian>(v as f32)
                    .expect("writing to Vec cannot fail");
            }
        }
        std::fs::write(path, out).map_err(|e| Error::io(path, e))
    }

    pub fn load(path: &Path) -> Result<Self> {
        let bytes = std::fs::read(path).map_err(|e| Error::io(path, e))?;
        Self::from_bytes(&bytes)
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<Self> {
        if bytes.len() < 12 {
            return Err(Error::Truncated {
                expected: 12,
                actual: bytes.len(),
            });
        }
        let magic = &bytes[0..8];
        if magic != DB_MAGIC {
            if &magic[..6] == &DB_MAGIC[..6] {
                return Err(Error::VersionMismatch {
                    found: String::from_utf8_lossy(magic).into_owned(),
                    supported: String::from_utf8_lossy(DB_MAGIC).into_owned(),
                });
            }
            return Err(Error::BadMagic {
                expected: String::from_utf8_lossy(DB_MAGIC).into_owned(),
                found: String::from_utf8_lossy(magic).into_owned(),
            });
        }
        let mut cursor = &bytes[8..];
        let count = cursor.read_u32::<LittleEndian>().unwrap() as usize;
        let mut consumed = 12usize;
        let mut records = Vec::with_capacity(count);
        for _ in 0..count {
            if cursor.len() < 2 {
                return Err(Error::Truncated {
                    expected: consumed + 2,
                    actual: bytes.len(),
                });
            }
            let id_len = cursor.read_u16::<LittleEndian>().unwrap() as usize;
            consumed += 2;
            let record_bytes = id_len + 4 * PARAM_DIM;
            if cursor.len() < record_bytes {
                return Err(Error::Truncated {
                    expected: consumed + record_bytes,
                    actual: bytes.len(),
                });
            }
            let id = String::from_utf8_lossy(&cursor[..id_len]).into_owned();
            cursor = &cursor[id_len..];
            let mut values = Vec::with_capacity(PARAM_DIM);
            for _ in 0..PARAM_DIM {
                values.push(f64::from(cursor.read_f32::<LittleEndian>().unwrap()));
            }
            consumed += record_bytes;
            records.push(PrototypeRecord {
                id,
                params: ParamVector::from_flat(&values)?,
            });
        }
        if !cursor.is_empty() {
            return Err(Error::TrailingData {
                extra: cursor.len(),
            });
        }
        build_database(records)
    }
}

/// Cosine of the angle between two vectors, clamped to `[-1, 1]`.
pub fn cosine_similarity(a: &[f64], b: &[f64]) -> Result<f64> {
    if a.len() != b.len() {
        return Err(Error::DimensionMismatch {
            what: "cosine operand".into(),
            expected: a.len(),
            actual: b.len(),
        });
    }
    let na = euclidean_norm(a);
    let nb = euclidean_norm(b);
    if na == 0.0 {
        return Err(Error::ZeroNorm { what: "a".into() });
    }
    if nb == 0.0 {
        return Err(Error::ZeroNorm { what: "b".into() });
    }
    let dot: f64 = a.iter().zip(b).map(|(x, y)| x * y).sum();
    Ok((dot / (na * nb)).clamp(-1.0, 1.0))
}

/// Top-`k` records by descending cosine similarity to `alpha0`.
///
/// Ties break toward the lower index, so results are deterministic and
/// `result[0]` is the argmax. Scores are computed per record
/// independently, which keeps the parallel scan identical to the
/// sequential one.
pub fn nearest(
    db: &PrototypeDatabase,
    alpha0: &[f64],
    k: usize,
) -> Result<Vec<(usize, f64)>> {
    if db.is_empty() {
        return Err(Error::EmptyDatabase);
    }
    if k == 0 || k > db.len() {
        return Err(Error::KOutOfRange { k, size: db.len() });
    }
    if alpha0.len() != ALPHA_DIM {
        return Err(Error::DimensionMismatch {
            what: "query alpha".into(),
            expected: ALPHA_DIM,
            actual: alpha0.len(),
        });
    }
    let qnorm = euclidean_norm(alpha0);
    if qnorm == 0.0 {
        return Err(Error::ZeroNorm {
            what: "query alpha".into(),
        });
    }

    let indices: Vec<usize> = (0..db.len()).collect();
    let scores = parallel::map_slice(&indices, |&i| {
        let r = db.record(i);
        let dot: f64 = alpha0.iter().zip(r.params.alpha()).map(|(x, y)| x * y).sum();
        (dot / (qnorm * db.alpha_norms()[i])).clamp(-1.0, 1.0)
    });

    let mut order: Vec<usize> = (0..db.len()).collect();
    order.sort_by(|&i, &j| {
        scores[j]
            .partial_cmp(&scores[i])
            .expect("scores are finite")
            .then(i.cmp(&j))
    });
    Ok(order.into_iter().take(k).map(|i| (i, scores[i])).collect())
}
