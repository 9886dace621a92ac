//! Deliverable aperture plans: representation, checker, file formats and
//! fluence-map export.
//!
//! Angles, rows and columns are 0-based in memory and 1-based in files.

use std::fmt;
use std::fmt::Write as _;
use std::path::Path;

use crate::config::Variant;
use crate::error::{Error, Result};
use crate::geometry::BeamGeometry;

/// One aperture: an angle, a uniform intensity and an optional open window
/// `[first, last]` (inclusive columns) per row.
#[derive(Debug, Clone, PartialEq)]
pub struct Aperture {
    pub angle: usize,
    pub intensity: f64,
    pub rows: Vec<Option<(usize, usize)>>,
}

impl Aperture {
    pub fn closed(angle: usize, num_rows: usize) -> Self {
        Self { angle, intensity: 0.0, rows: vec![None; num_rows] }
    }

    pub fn is_empty(&self) -> bool {
        self.rows.iter().all(Option::is_none)
    }

    pub fn open_count(&self) -> usize {
        self.rows.iter().flatten().map(|&(a, b)| b + 1 - a).sum()
    }

    /// Whether the 0-based `(row, col)` cell is open.
    pub fn is_open(&self, row: usize, col: usize) -> bool {
        matches!(self.rows.get(row), Some(Some((a, b))) if *a <= col && col <= *b)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct FluencePlan {
    pub geometry: BeamGeometry,
    pub apertures: Vec<Aperture>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum PlanViolationKind {
    /// Aperture count differs from the geometry's budget.
    Count,
    Angle,
    Intensity,
    /// Row window out of range or malformed.
    Window,
    /// Open beamlets at more than one angle.
    MultipleAngles,
    /// Open beamlets of one row are not contiguous.
    Island,
    /// Active rows do not form one vertical block.
    VerticalGap,
    /// Two adjacent active rows share no column.
    HorizontalGap,
}

impl PlanViolationKind {
    pub fn name(self) -> &'static str {
        match self {
            PlanViolationKind::Count => "count",
            PlanViolationKind::Angle => "angle",
            PlanViolationKind::Intensity => "intensity",
            PlanViolationKind::Window => "window",
            PlanViolationKind::MultipleAngles => "multiple_angles",
            PlanViolationKind::Island => "island",
            PlanViolationKind::VerticalGap => "vertical_gap",
            PlanViolationKind::HorizontalGap => "horizontal_gap",
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct PlanViolation {
    /// 0-based aperture, `None` for plan-level problems.
    pub aperture: Option<usize>,
    pub kind: PlanViolationKind,
    pub detail: String,
}

impl fmt::Display for PlanViolation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self.aperture {
            Some(a) => write!(f, "aperture {}: {}: {}", a + 1, self.kind.name(), self.detail),
            None => write!(f, "{}: {}", self.kind.name(), self.detail),
        }
    }
}

fn violation(aperture: Option<usize>, kind: PlanViolationKind, detail: String) -> PlanViolation {
    PlanViolation { aperture, kind, detail }
}

/// Checks one aperture given as an open mask over all beamlets. Rows are
/// checked for islands; with `continuity` the active rows must also form one
/// block with every adjacent pair sharing a column.
pub fn check_aperture_mask(geom: &BeamGeometry, open: &[bool], continuity: bool) -> Vec<(PlanViolationKind, String)> {
    let mut out = Vec::new();
    if open.len() != geom.num_beamlets() {
        out.push((PlanViolationKind::Window, format!("mask has {} cells for {} beamlets", open.len(), geom.num_beamlets())));
        return out;
    }
    let (nq, nk) = (geom.num_rows(), geom.num_cols());
    let angles: Vec<usize> = (0..geom.num_angles()).filter(|&t| geom.angle_beamlets(t).any(|b| open[b])).collect();
    if angles.len() > 1 {
        let list: Vec<String> = angles.iter().map(|t| (t + 1).to_string()).collect();
        out.push((PlanViolationKind::MultipleAngles, format!("open beamlets at angles {}", list.join(", "))));
    }
    for &t in &angles {
        let mut spans: Vec<Option<(usize, usize)>> = Vec::with_capacity(nq);
        for q in 0..nq {
            let cols: Vec<usize> = (0..nk).filter(|&k| open[geom.beamlet(q, k, t)]).collect();
            match (cols.first(), cols.last()) {
                (Some(&a), Some(&b)) => {
                    if b + 1 - a != cols.len() {
                        out.push((PlanViolationKind::Island, format!("angle {} row {}: open columns are not contiguous", t + 1, q + 1)));
                    }
                    spans.push(Some((a, b)));
                }
                _ => spans.push(None),
            }
        }
        if !continuity {
            continue;
        }
        let active: Vec<usize> = (0..nq).filter(|&q| spans[q].is_some()).collect();
        if let (Some(&first), Some(&last)) = (active.first(), active.last()) {
            if last + 1 - first != active.len() {
                out.push((PlanViolationKind::VerticalGap, format!("angle {}: active rows {}..{} have a gap", t + 1, first + 1, last + 1)));
            }
            for w in active.windows(2) {
                let (a1, b1) = spans[w[0]].expect("active");
                let (a2, b2) = spans[w[1]].expect("active");
                if w[1] == w[0] + 1 && (b2 < a1 || a2 > b1) {
                    out.push((
                        PlanViolationKind::HorizontalGap,
                        format!("angle {}: rows {} and {} share no column", t + 1, w[0] + 1, w[1] + 1),
                    ));
                }
            }
        }
    }
    out
}

/// Every deliverability problem of a plan for a model variant. Continuity is
/// only required for the `-C` variants.
pub fn check_deliverability(plan: &FluencePlan, variant: Variant) -> Vec<PlanViolation> {
    let geom = &plan.geometry;
    let mut out = Vec::new();
    if plan.apertures.len() != geom.num_apertures() {
        out.push(violation(
            None,
            PlanViolationKind::Count,
            format!("{} apertures for a budget of {}", plan.apertures.len(), geom.num_apertures()),
        ));
    }
    for (a, ap) in plan.apertures.iter().enumerate() {
        let here = Some(a);
        if ap.angle >= geom.num_angles() {
            out.push(violation(here, PlanViolationKind::Angle, format!("angle {} of {}", ap.angle + 1, geom.num_angles())));
            continue;
        }
        if !(ap.intensity.is_finite() && ap.intensity >= 0.0) {
            out.push(violation(here, PlanViolationKind::Intensity, format!("intensity {}", ap.intensity)));
        }
        if ap.rows.len() != geom.num_rows() {
            out.push(violation(here, PlanViolationKind::Window, format!("{} row windows for {} rows", ap.rows.len(), geom.num_rows())));
            continue;
        }
        let mut bad = false;
        for (q, w) in ap.rows.iter().enumerate() {
            if let Some((f, l)) = *w {
                if f > l || l >= geom.num_cols() {
                    out.push(violation(here, PlanViolationKind::Window, format!("row {} window [{}, {}]", q + 1, f + 1, l + 1)));
                    bad = true;
                }
            }
        }
        if bad {
            continue;
        }
        let mask = plan.aperture_mask(a);
        for (kind, detail) in check_aperture_mask(geom, &mask, variant.has_continuity()) {
            out.push(violation(here, kind, detail));
        }
    }
    out
}

impl FluencePlan {
    /// A plan of closed apertures, spread over angles in equal blocks.
    pub fn empty(geometry: BeamGeometry) -> Self {
        let apertures =
            (0..geometry.num_apertures()).map(|a| Aperture::closed(geometry.block_angle(a), geometry.num_rows())).collect();
        Self { geometry, apertures }
    }

    /// Builds a plan from per-aperture open masks over all beamlets. Fails
    /// if a mask opens several angles or has an island.
    pub fn from_masks(geometry: BeamGeometry, apertures: &[(usize, f64, Vec<bool>)]) -> Result<Self> {
        let mut out = Vec::with_capacity(apertures.len());
        for (a, (angle, intensity, mask)) in apertures.iter().enumerate() {
            let problems = check_aperture_mask(&geometry, mask, false);
            if let Some((kind, detail)) = problems.first() {
                return Err(Error::Invalid(format!("aperture {}: {}: {detail}", a + 1, kind.name())));
            }
            let mut ap = Aperture::closed(*angle, geometry.num_rows());
            for q in 0..geometry.num_rows() {
                let cols: Vec<usize> = (0..geometry.num_cols()).filter(|&k| mask[geometry.beamlet(q, k, *angle)]).collect();
                if let (Some(&f), Some(&l)) = (cols.first(), cols.last()) {
                    ap.rows[q] = Some((f, l));
                }
            }
            ap.intensity = *intensity;
            out.push(ap);
        }
        Ok(Self { geometry, apertures: out })
    }

    /// Open mask of one aperture over all beamlets.
    pub fn aperture_mask(&self, a: usize) -> Vec<bool> {
        let geom = &self.geometry;
        let ap = &self.apertures[a];
        let mut mask = vec![false; geom.num_beamlets()];
        for (q, w) in ap.rows.iter().enumerate() {
            if let Some((f, l)) = *w {
                for k in f..=l.min(geom.num_cols() - 1) {
                    mask[geom.beamlet(q, k, ap.angle)] = true;
                }
            }
        }
        mask
    }

    /// Per-aperture beamlet intensities, indexed `[b * |A| + a]`.
    pub fn aperture_fluence(&self) -> Vec<f64> {
        let na = self.apertures.len();
        let mut w = vec![0.0; self.geometry.num_beamlets() * na];
        for (a, ap) in self.apertures.iter().enumerate() {
            for (b, open) in self.aperture_mask(a).into_iter().enumerate() {
                if open {
                    w[b * na + a] = ap.intensity;
                }
            }
        }
        w
    }

    /// Delivered fluence per beamlet.
    pub fn fluence(&self) -> Vec<f64> {
        let na = self.apertures.len().max(1);
        self.aperture_fluence().chunks(na).map(|c| c.iter().sum()).collect()
    }

    /// Per-aperture sum of intensities at each angle, indexed `[a][theta]`.
    pub fn angle_sums(&self) -> Vec<Vec<f64>> {
        self.apertures
            .iter()
            .map(|ap| {
                let mut s = vec![0.0; self.geometry.num_angles()];
                if ap.angle < s.len() {
                    s[ap.angle] = ap.intensity * ap.open_count() as f64;
                }
                s
            })
            .collect()
    }

    /// Apertures delivering any dose.
    pub fn apertures_used(&self) -> usize {
        self.apertures.iter().filter(|a| a.intensity > 0.0 && !a.is_empty()).count()
    }

    /// Same plan with every intensity multiplied by `c`.
    pub fn scaled(&self, c: f64) -> Self {
        let mut p = self.clone();
        p.apertures.iter_mut().for_each(|a| a.intensity *= c);
        p
    }

    /// Text form: a header `angles rows cols apertures`, then per aperture a
    /// line `angle intensity` and one `first last` or `- -` line per row.
    pub fn to_text(&self) -> String {
        let g = &self.geometry;
        let mut s = format!("{} {} {} {}\n", g.num_angles(), g.num_rows(), g.num_cols(), self.apertures.len());
        for ap in &self.apertures {
            let _ = writeln!(s, "{} {}", ap.angle + 1, ap.intensity);
            for w in &ap.rows {
                match w {
                    Some((f, l)) => {
                        let _ = writeln!(s, "{} {}", f + 1, l + 1);
                    }
                    None => s.push_str("- -\n"),
                }
            }
        }
        s
    }

    pub fn from_text(text: &str) -> Result<Self> {
        let mut lines = text.lines().map(str::trim).filter(|l| !l.is_empty() && !l.starts_with('#'));
        let bad = |m: String| Error::Format(format!("plan file: {m}"));
        let header = lines.next().ok_or_else(|| bad("empty file".into()))?;
        let dims: Vec<usize> = header
            .split_whitespace()
            .map(|t| t.parse().map_err(|_| bad(format!("bad header token '{t}'"))))
            .collect::<Result<_>>()?;
        let [na, nq, nk, naps] = dims[..] else {
            return Err(bad(format!("header needs 4 numbers, got '{header}'")));
        };
        let geometry = BeamGeometry::new(na, nq, nk, naps)?;
        let mut apertures = Vec::with_capacity(naps);
        for a in 0..naps {
            let line = lines.next().ok_or_else(|| bad(format!("missing aperture {}", a + 1)))?;
            let toks: Vec<&str> = line.split_whitespace().collect();
            let [angle, intensity] = toks[..] else {
                return Err(bad(format!("aperture {} header '{line}'", a + 1)));
            };
            let angle: usize = angle.parse().map_err(|_| bad(format!("bad angle '{angle}'")))?;
            if angle == 0 {
                return Err(bad(format!("aperture {} angle must be >= 1", a + 1)));
            }
            let intensity: f64 = intensity.parse().map_err(|_| bad(format!("bad intensity '{intensity}'")))?;
            let mut rows = Vec::with_capacity(nq);
            for q in 0..nq {
                let line = lines.next().ok_or_else(|| bad(format!("aperture {} missing row {}", a + 1, q + 1)))?;
                let toks: Vec<&str> = line.split_whitespace().collect();
                rows.push(match toks[..] {
                    ["-", "-"] => None,
                    [f, l] => {
                        let f: usize = f.parse().map_err(|_| bad(format!("bad column '{f}'")))?;
                        let l: usize = l.parse().map_err(|_| bad(format!("bad column '{l}'")))?;
                        if f == 0 || l == 0 {
                            return Err(bad(format!("aperture {} row {}: columns are 1-based", a + 1, q + 1)));
                        }
                        Some((f - 1, l - 1))
                    }
                    _ => return Err(bad(format!("aperture {} row {}: '{line}'", a + 1, q + 1))),
                });
            }
            apertures.push(Aperture { angle: angle - 1, intensity, rows });
        }
        if let Some(extra) = lines.next() {
            return Err(bad(format!("trailing content '{extra}'")));
        }
        Ok(Self { geometry, apertures })
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        std::fs::write(path, self.to_text())?;
        Ok(())
    }

    pub fn load(path: &Path) -> Result<Self> {
        if !path.exists() {
            return Err(Error::NotFound(path.to_path_buf()));
        }
        Self::from_text(&std::fs::read_to_string(path)?)
    }
}

/// Fluence matrix of one angle, `rows x cols`.
pub fn fluence_map(geom: &BeamGeometry, fluence: &[f64], angle: usize) -> Vec<Vec<f64>> {
    (0..geom.num_rows()).map(|q| (0..geom.num_cols()).map(|k| fluence[geom.beamlet(q, k, angle)]).collect()).collect()
}

/// Comma-separated fluence matrix of one angle, one line per row.
pub fn fluence_csv(geom: &BeamGeometry, fluence: &[f64], angle: usize) -> String {
    fluence_map(geom, fluence, angle)
        .iter()
        .map(|row| row.iter().map(|v| v.to_string()).collect::<Vec<_>>().join(",") + "\n")
        .collect()
}

/// Plain (ASCII) PGM image of one angle's fluence, scaled to 0..255. With
/// `log_scale` each value is mapped through `log10(1 + v)` first.
pub fn fluence_pgm(geom: &BeamGeometry, fluence: &[f64], angle: usize, log_scale: bool) -> String {
    let map = fluence_map(geom, fluence, angle);
    let tf = |v: f64| if log_scale { (1.0 + v.max(0.0)).log10() } else { v.max(0.0) };
    let max = map.iter().flatten().copied().map(tf).fold(0.0, f64::max);
    let mut s = format!("P2\n{} {}\n255\n", geom.num_cols(), geom.num_rows());
    for row in &map {
        let px: Vec<String> =
            row.iter().map(|&v| if max > 0.0 { ((tf(v) / max) * 255.0).round() as u8 } else { 0 }.to_string()).collect();
        s.push_str(&px.join(" "));
        s.push('\n');
    }
    s
}
