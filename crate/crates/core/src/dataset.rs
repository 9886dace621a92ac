//! Seeded synthetic phantoms and the on-disk dataset format.
//!
//! A dataset directory holds `manifest.txt` (`key = value` lines),
//! `structures.txt` (1-based voxel ids) and `dose.tensor`: a 16-byte header
//! (`RDT1` then voxels, beamlets and phases as little-endian u32) followed by
//! little-endian f64 values in `[voxel][beamlet][phase]` order.

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use sha2::{Digest, Sha256};

use crate::dose::DoseInfluenceTensor;
use crate::error::{Error, Result};
use crate::geometry::BeamGeometry;
use crate::structures::{HealthyStructure, StructureSet};

pub const MANIFEST_FILE: &str = "manifest.txt";
pub const STRUCTURES_FILE: &str = "structures.txt";
pub const TENSOR_FILE: &str = "dose.tensor";
const MAGIC: &[u8; 4] = b"RDT1";
const FORMAT_VERSION: u32 = 1;

/// Default uniform prescription in Gy.
pub const DEFAULT_PRESCRIPTION: f64 = 42.4;

/// Parameters of a synthetic phantom.
#[derive(Debug, Clone, PartialEq)]
pub struct PhantomSpec {
    pub seed: u64,
    pub geometry: BeamGeometry,
    pub num_target_voxels: usize,
    pub num_healthy_voxels: usize,
    pub num_phases: usize,
    /// Breathing displacement in `[0, 1]`; 0 makes every phase identical.
    pub motion_amplitude: f64,
    pub prescription: f64,
}

impl PhantomSpec {
    pub fn new(seed: u64, geometry: BeamGeometry, num_target_voxels: usize, num_healthy_voxels: usize, num_phases: usize) -> Self {
        Self {
            seed,
            geometry,
            num_target_voxels,
            num_healthy_voxels,
            num_phases,
            motion_amplitude: 0.5,
            prescription: DEFAULT_PRESCRIPTION,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.num_target_voxels == 0 {
            return Err(Error::Spec("at least one target voxel is required".into()));
        }
        if self.num_phases == 0 {
            return Err(Error::Spec("at least one breathing phase is required".into()));
        }
        if !(0.0..=1.0).contains(&self.motion_amplitude) {
            return Err(Error::Spec(format!("motion amplitude must lie in [0, 1], got {}", self.motion_amplitude)));
        }
        if !(self.prescription.is_finite() && self.prescription > 0.0) {
            return Err(Error::Spec(format!("prescription must be positive, got {}", self.prescription)));
        }
        Ok(())
    }
}

/// Footprint width of a beamlet in cells.
const SIGMA: f64 = 0.8;
/// Footprint cutoff radius in cells.
const CUTOFF: f64 = 2.5 * SIGMA;
/// Healthy voxels see this fraction of the target-level influence.
const HEALTHY_SCALE: f64 = 0.5;

/// Inclusive cell range of the target region along an axis of length `n`.
fn target_span(n: usize) -> (f64, f64) {
    let lo = (n as f64 * 0.2).floor();
    let hi = ((n as f64 * 0.8).ceil() - 1.0).max(lo);
    (lo, hi)
}

/// Generates a phantom: target voxels project into a central rectangle of
/// every beam, healthy voxels anywhere in the field at lower influence.
/// Each voxel's projection moves with the breathing phase, from inhale
/// (phase 1) to exhale (last phase), by up to a quarter of the field.
pub fn generate_phantom(spec: &PhantomSpec) -> Result<(DoseInfluenceTensor, StructureSet, BeamGeometry)> {
    spec.validate()?;
    let g = spec.geometry;
    let (nq, nk, nt) = (g.num_rows(), g.num_cols(), g.num_angles());
    let nv = spec.num_target_voxels + spec.num_healthy_voxels;
    let (nb, ni) = (g.num_beamlets(), spec.num_phases);
    let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
    let (rlo, rhi) = target_span(nq);
    let (clo, chi) = target_span(nk);
    let mut values = vec![0.0; nv * nb * ni];
    for v in 0..nv {
        let target = v < spec.num_target_voxels;
        for t in 0..nt {
            let (row, col) = if target {
                (rng.random_range(rlo - 0.5..=rhi + 0.5), rng.random_range(clo - 0.5..=chi + 0.5))
            } else {
                (rng.random_range(-0.5..=nq as f64 - 0.5), rng.random_range(-0.5..=nk as f64 - 0.5))
            };
            let depth = rng.random_range(0.6..=1.0) * if target { 1.0 } else { HEALTHY_SCALE };
            let drift_row: f64 = rng.random_range(0.5..=1.0);
            let drift_col: f64 = rng.random_range(-0.5..=0.5);
            for i in 0..ni {
                let phase = if ni > 1 { i as f64 / (ni - 1) as f64 } else { 0.0 };
                let shift = spec.motion_amplitude * phase * 0.25;
                let r = (row + shift * drift_row * nq as f64).clamp(-0.5, nq as f64 - 0.5);
                let c = (col + shift * drift_col * nk as f64).clamp(-0.5, nk as f64 - 0.5);
                for q in 0..nq {
                    let dr = q as f64 - r;
                    if dr.abs() > CUTOFF {
                        continue;
                    }
                    for k in 0..nk {
                        let dc = k as f64 - c;
                        let d2 = dr * dr + dc * dc;
                        if d2 > CUTOFF * CUTOFF {
                            continue;
                        }
                        let b = g.beamlet(q, k, t);
                        values[(v * nb + b) * ni + i] = depth * (-d2 / (2.0 * SIGMA * SIGMA)).exp();
                    }
                }
            }
        }
    }
    let dose = DoseInfluenceTensor::new(nv, nb, ni, values)?;
    let target: Vec<usize> = (0..spec.num_target_voxels).collect();
    let healthy = if spec.num_healthy_voxels > 0 {
        vec![HealthyStructure { name: "heart".into(), voxels: (spec.num_target_voxels..nv).collect() }]
    } else {
        Vec::new()
    };
    let structures = StructureSet::uniform(target, spec.prescription, healthy)?;
    Ok((dose, structures, g))
}

/// Seed and spec of the shipped phantom on which a nominal plan underdoses
/// under an exhale-heavy breathing pattern while a robust plan does not.
pub fn adversarial_spec() -> PhantomSpec {
    let geometry = BeamGeometry::new(2, 6, 5, 4).expect("valid geometry");
    PhantomSpec { motion_amplitude: 1.0, ..PhantomSpec::new(ADVERSARIAL_SEED, geometry, 8, 6, 5) }
}

pub const ADVERSARIAL_SEED: u64 = 33;

/// Summary written next to the tensor.
#[derive(Debug, Clone, PartialEq)]
pub struct DatasetManifest {
    pub geometry: BeamGeometry,
    pub num_voxels: usize,
    pub num_phases: usize,
    pub num_target: usize,
    pub num_healthy: usize,
    pub min_prescription: f64,
    pub tensor_path: PathBuf,
    /// First 8 bytes of the SHA-256 of the tensor file.
    pub checksum: u64,
    /// Same for the structures file.
    pub structures_checksum: u64,
    /// Extra `key = value` entries (phantom parameters, for example).
    pub extra: BTreeMap<String, String>,
}

impl DatasetManifest {
    pub fn to_text(&self) -> String {
        let g = &self.geometry;
        let mut s = String::new();
        let _ = writeln!(s, "format_version = {FORMAT_VERSION}");
        let _ = writeln!(s, "angles = {}", g.num_angles());
        let _ = writeln!(s, "rows = {}", g.num_rows());
        let _ = writeln!(s, "cols = {}", g.num_cols());
        let _ = writeln!(s, "apertures = {}", g.num_apertures());
        let _ = writeln!(s, "voxels = {}", self.num_voxels);
        let _ = writeln!(s, "phases = {}", self.num_phases);
        let _ = writeln!(s, "target_voxels = {}", self.num_target);
        let _ = writeln!(s, "healthy_voxels = {}", self.num_healthy);
        let _ = writeln!(s, "min_prescription = {}", self.min_prescription);
        let _ = writeln!(s, "tensor = {}", self.tensor_path.display());
        let _ = writeln!(s, "checksum = {:016x}", self.checksum);
        let _ = writeln!(s, "structures_checksum = {:016x}", self.structures_checksum);
        for (k, v) in &self.extra {
            let _ = writeln!(s, "{k} = {v}");
        }
        s
    }

    pub fn from_text(text: &str) -> Result<Self> {
        let mut map = parse_key_values(text)?;
        let mut take = |k: &str| map.remove(k).ok_or_else(|| Error::Format(format!("manifest is missing '{k}'")));
        let num = |v: String, k: &str| v.parse::<usize>().map_err(|_| Error::Format(format!("manifest '{k}' is not a count: {v}")));
        let hex = |v: String, k: &str| u64::from_str_radix(&v, 16).map_err(|_| Error::Format(format!("manifest '{k}' is not hex: {v}")));
        let version = num(take("format_version")?, "format_version")?;
        if version != FORMAT_VERSION as usize {
            return Err(Error::Format(format!("unsupported dataset format version {version}")));
        }
        let geometry = BeamGeometry::new(
            num(take("angles")?, "angles")?,
            num(take("rows")?, "rows")?,
            num(take("cols")?, "cols")?,
            num(take("apertures")?, "apertures")?,
        )
        .map_err(|e| Error::Format(format!("manifest geometry: {e}")))?;
        let m = Self {
            geometry,
            num_voxels: num(take("voxels")?, "voxels")?,
            num_phases: num(take("phases")?, "phases")?,
            num_target: num(take("target_voxels")?, "target_voxels")?,
            num_healthy: num(take("healthy_voxels")?, "healthy_voxels")?,
            min_prescription: take("min_prescription")?
                .parse()
                .map_err(|_| Error::Format("manifest 'min_prescription' is not a number".into()))?,
            tensor_path: PathBuf::from(take("tensor")?),
            checksum: hex(take("checksum")?, "checksum")?,
            structures_checksum: hex(take("structures_checksum")?, "structures_checksum")?,
            extra: BTreeMap::new(),
        };
        Ok(Self { extra: map, ..m })
    }
}

/// Parses `key = value` lines, skipping blanks and `#` comments.
pub fn parse_key_values(text: &str) -> Result<BTreeMap<String, String>> {
    let mut map = BTreeMap::new();
    for (n, line) in text.lines().enumerate() {
        let l = line.trim();
        if l.is_empty() || l.starts_with('#') {
            continue;
        }
        let (k, v) = l.split_once('=').ok_or_else(|| Error::Format(format!("line {}: expected 'key = value'", n + 1)))?;
        map.insert(k.trim().to_string(), v.trim().to_string());
    }
    Ok(map)
}

/// First 8 bytes of SHA-256, big-endian.
pub fn checksum64(bytes: &[u8]) -> u64 {
    let digest = Sha256::digest(bytes);
    u64::from_be_bytes(digest[..8].try_into().expect("digest has 32 bytes"))
}

/// A loaded dataset.
#[derive(Debug, Clone)]
pub struct Dataset {
    pub dose: DoseInfluenceTensor,
    pub structures: StructureSet,
    pub geometry: BeamGeometry,
    pub manifest: DatasetManifest,
}

fn tensor_bytes(dose: &DoseInfluenceTensor) -> Result<Vec<u8>> {
    let (nv, nb, ni) = dose.dims();
    let mut out = Vec::with_capacity(16 + 8 * dose.values().len());
    out.extend_from_slice(MAGIC);
    for d in [nv, nb, ni] {
        let d = u32::try_from(d).map_err(|_| Error::Shape(format!("dimension {d} does not fit the tensor header")))?;
        out.extend_from_slice(&d.to_le_bytes());
    }
    for v in dose.values() {
        out.extend_from_slice(&v.to_le_bytes());
    }
    Ok(out)
}

fn parse_tensor(bytes: &[u8]) -> Result<DoseInfluenceTensor> {
    if bytes.len() < 16 || &bytes[..4] != MAGIC {
        return Err(Error::Format("tensor file has no RDT1 header".into()));
    }
    let dim = |i: usize| u32::from_le_bytes(bytes[4 + 4 * i..8 + 4 * i].try_into().expect("4 bytes")) as usize;
    let (nv, nb, ni) = (dim(0), dim(1), dim(2));
    let n = nv * nb * ni;
    if bytes.len() != 16 + 8 * n {
        return Err(Error::Format(format!("tensor body has {} bytes, header implies {}", bytes.len() - 16, 8 * n)));
    }
    let values = bytes[16..].chunks_exact(8).map(|c| f64::from_le_bytes(c.try_into().expect("8 bytes"))).collect();
    DoseInfluenceTensor::new(nv, nb, ni, values).map_err(|e| Error::Format(format!("tensor: {e}")))
}

fn structures_text(s: &StructureSet) -> String {
    let mut out = String::from("# target <voxel> <prescription>; healthy <name> <voxel>...\n");
    for (v, l) in s.target().iter().zip(s.prescription()) {
        let _ = writeln!(out, "target {} {l}", v + 1);
    }
    for h in s.healthy() {
        let _ = write!(out, "healthy {}", h.name);
        for v in &h.voxels {
            let _ = write!(out, " {}", v + 1);
        }
        out.push('\n');
    }
    out
}

fn parse_structures(text: &str) -> Result<StructureSet> {
    let (mut target, mut rx, mut healthy) = (Vec::new(), Vec::new(), Vec::new());
    let id = |t: &str, n: usize| -> Result<usize> {
        t.parse::<usize>()
            .ok()
            .filter(|&v| v >= 1)
            .map(|v| v - 1)
            .ok_or_else(|| Error::Format(format!("structures line {}: bad voxel id '{t}'", n + 1)))
    };
    for (n, line) in text.lines().enumerate() {
        let l = line.trim();
        if l.is_empty() || l.starts_with('#') {
            continue;
        }
        let parts: Vec<&str> = l.split_whitespace().collect();
        match parts.as_slice() {
            ["target", v, p] => {
                target.push(id(v, n)?);
                rx.push(p.parse::<f64>().map_err(|_| Error::Format(format!("structures line {}: bad prescription", n + 1)))?);
            }
            ["healthy", name, ids @ ..] => {
                let voxels = ids.iter().map(|t| id(t, n)).collect::<Result<Vec<_>>>()?;
                healthy.push(HealthyStructure { name: name.to_string(), voxels });
            }
            _ => return Err(Error::Format(format!("structures line {}: unrecognized '{l}'", n + 1))),
        }
    }
    StructureSet::new(target, rx, healthy).map_err(|e| Error::Format(format!("structures: {e}")))
}

/// Writes a dataset directory and returns its manifest.
pub fn save_dataset(
    dir: &Path,
    dose: &DoseInfluenceTensor,
    structures: &StructureSet,
    geom: &BeamGeometry,
    extra: BTreeMap<String, String>,
) -> Result<DatasetManifest> {
    crate::robust::check_dims(dose, structures, geom, &crate::uncertainty::UncertaintySet::singleton(vec![1.0 / dose.num_phases() as f64; dose.num_phases()])?)?;
    std::fs::create_dir_all(dir)?;
    let bytes = tensor_bytes(dose)?;
    let stext = structures_text(structures);
    let manifest = DatasetManifest {
        geometry: *geom,
        num_voxels: dose.num_voxels(),
        num_phases: dose.num_phases(),
        num_target: structures.num_target(),
        num_healthy: structures.healthy().iter().map(|h| h.voxels.len()).sum(),
        min_prescription: structures.min_prescription(),
        tensor_path: PathBuf::from(TENSOR_FILE),
        checksum: checksum64(&bytes),
        structures_checksum: checksum64(stext.as_bytes()),
        extra,
    };
    std::fs::write(dir.join(TENSOR_FILE), &bytes)?;
    std::fs::write(dir.join(STRUCTURES_FILE), stext)?;
    std::fs::write(dir.join(MANIFEST_FILE), manifest.to_text())?;
    Ok(manifest)
}

fn read(path: &Path) -> Result<Vec<u8>> {
    std::fs::read(path).map_err(|e| match e.kind() {
        std::io::ErrorKind::NotFound => Error::NotFound(path.to_path_buf()),
        _ => Error::Io(e),
    })
}

/// Reads a dataset directory, verifying both checksums and all counts.
pub fn load_dataset(dir: &Path) -> Result<Dataset> {
    let mtext = String::from_utf8(read(&dir.join(MANIFEST_FILE))?).map_err(|_| Error::Format("manifest is not UTF-8".into()))?;
    let manifest = DatasetManifest::from_text(&mtext)?;
    let bytes = read(&dir.join(&manifest.tensor_path))?;
    let sum = checksum64(&bytes);
    if sum != manifest.checksum {
        return Err(Error::Corruption(format!("tensor checksum {sum:016x} differs from manifest {:016x}", manifest.checksum)));
    }
    let sbytes = read(&dir.join(STRUCTURES_FILE))?;
    let ssum = checksum64(&sbytes);
    if ssum != manifest.structures_checksum {
        return Err(Error::Corruption(format!(
            "structures checksum {ssum:016x} differs from manifest {:016x}",
            manifest.structures_checksum
        )));
    }
    let dose = parse_tensor(&bytes)?;
    let structures = parse_structures(&String::from_utf8(sbytes).map_err(|_| Error::Format("structures file is not UTF-8".into()))?)?;
    let geometry = manifest.geometry;
    if dose.num_voxels() != manifest.num_voxels || dose.num_phases() != manifest.num_phases || dose.num_beamlets() != geometry.num_beamlets() {
        return Err(Error::Format(format!(
            "tensor dims {:?} disagree with manifest ({} voxels, {} beamlets, {} phases)",
            dose.dims(),
            manifest.num_voxels,
            geometry.num_beamlets(),
            manifest.num_phases
        )));
    }
    if structures.num_target() != manifest.num_target {
        return Err(Error::Format(format!("{} target voxels, manifest says {}", structures.num_target(), manifest.num_target)));
    }
    if structures.max_voxel().is_some_and(|v| v >= dose.num_voxels()) {
        return Err(Error::Format("structure voxel id beyond the tensor".into()));
    }
    Ok(Dataset { dose, structures, geometry, manifest })
}

/// Manifest entries describing a phantom spec.
pub fn spec_entries(spec: &PhantomSpec) -> BTreeMap<String, String> {
    let mut m = BTreeMap::new();
    m.insert("phantom.seed".into(), spec.seed.to_string());
    m.insert("phantom.motion_amplitude".into(), spec.motion_amplitude.to_string());
    m.insert("phantom.prescription".into(), spec.prescription.to_string());
    m
}

#[cfg(test)]
mod tests {
    use super::*;

    fn small() -> PhantomSpec {
        PhantomSpec::new(7, BeamGeometry::new(2, 4, 3, 2).unwrap(), 5, 3, 3)
    }

    #[test]
    fn deterministic_for_a_seed() {
        let (a, _, _) = generate_phantom(&small()).unwrap();
        let (b, _, _) = generate_phantom(&small()).unwrap();
        assert_eq!(a.values(), b.values());
        let (c, _, _) = generate_phantom(&PhantomSpec { seed: 8, ..small() }).unwrap();
        assert_ne!(a.values(), c.values());
    }

    #[test]
    fn static_phantom_has_equal_phases() {
        let (d, _, _) = generate_phantom(&PhantomSpec { motion_amplitude: 0.0, ..small() }).unwrap();
        for v in 0..d.num_voxels() {
            for b in 0..d.num_beamlets() {
                assert!((1..3).all(|i| d.get(v, b, i) == d.get(v, b, 0)));
            }
        }
    }

    #[test]
    fn every_target_voxel_is_reachable_in_every_phase() {
        let (d, s, _) = generate_phantom(&PhantomSpec { motion_amplitude: 1.0, ..small() }).unwrap();
        for &v in s.target() {
            for i in 0..3 {
                assert!((0..d.num_beamlets()).any(|b| d.get(v, b, i) > 0.0));
            }
        }
    }

    #[test]
    fn zero_targets_rejected() {
        assert!(matches!(generate_phantom(&PhantomSpec { num_target_voxels: 0, ..small() }), Err(Error::Spec(_))));
    }

    #[test]
    fn save_load_round_trip_and_corruption() {
        let dir = tempfile::tempdir().unwrap();
        let spec = small();
        let (d, s, g) = generate_phantom(&spec).unwrap();
        let m = save_dataset(dir.path(), &d, &s, &g, spec_entries(&spec)).unwrap();
        let ds = load_dataset(dir.path()).unwrap();
        assert_eq!(ds.dose, d);
        assert_eq!(ds.structures, s);
        assert_eq!(ds.geometry, g);
        assert_eq!(ds.manifest, m);
        let path = dir.path().join(TENSOR_FILE);
        let mut bytes = std::fs::read(&path).unwrap();
        let last = bytes.len() - 1;
        bytes[last] ^= 1;
        std::fs::write(&path, bytes).unwrap();
        assert!(matches!(load_dataset(dir.path()), Err(Error::Corruption(_))));
        std::fs::remove_file(&path).unwrap();
        assert!(matches!(load_dataset(dir.path()), Err(Error::NotFound(_))));
    }
}
