//! Point configurations: sampling, shifting, persistence.
//!
//! A configuration is a finite point set in a box together with the seed and
//! generator that produced it. Randomness flows through [`RngStream`], a
//! (seed, stream) pair mapped onto independent ChaCha streams so that
//! parallel sampling is reproducible regardless of scheduling.

use std::collections::HashSet;
use std::io::{BufRead, BufReader, Read};
use std::path::Path;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Poisson};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linalg::{sub, Vector};

/// Axis-aligned simulation box. Half-open on sampling (`[lower, upper)`),
/// closed on validation so that shifted configurations stay legal.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SimBox<const D: usize> {
    pub lower: Vector<D>,
    pub upper: Vector<D>,
    pub periodic: bool,
}

impl<const D: usize> SimBox<D> {
    pub fn new(lower: Vector<D>, upper: Vector<D>, periodic: bool) -> Result<Self> {
        for i in 0..D {
            if !(upper[i] > lower[i]) || !lower[i].is_finite() || !upper[i].is_finite() {
                return Err(Error::invalid(format!(
                    "box axis {i}: need finite lower < upper, got [{}, {}]",
                    lower[i], upper[i]
                )));
            }
        }
        Ok(SimBox {
            lower,
            upper,
            periodic,
        })
    }

    pub fn unit(side: f64) -> Self {
        SimBox {
            lower: [0.0; D],
            upper: [side; D],
            periodic: false,
        }
    }

    pub fn side(&self, axis: usize) -> f64 {
        self.upper[axis] - self.lower[axis]
    }

    pub fn volume(&self) -> f64 {
        (0..D).map(|i| self.side(i)).product()
    }

    pub fn center(&self) -> Vector<D> {
        std::array::from_fn(|i| 0.5 * (self.lower[i] + self.upper[i]))
    }

    /// Radius of the largest ball centered at `center()` inside the box.
    pub fn inradius(&self) -> f64 {
        (0..D)
            .map(|i| 0.5 * self.side(i))
            .fold(f64::INFINITY, f64::min)
    }

    pub fn contains(&self, p: Vector<D>) -> bool {
        (0..D).all(|i| p[i] >= self.lower[i] && p[i] <= self.upper[i])
    }

    /// Map a point into the box by periodic wrapping.
    pub fn wrap(&self, p: Vector<D>) -> Vector<D> {
        std::array::from_fn(|i| {
            let s = self.side(i);
            let mut v = p[i];
            while v < self.lower[i] {
                v += s;
            }
            while v >= self.upper[i] {
                v -= s;
            }
            v
        })
    }

    fn translated(&self, z: Vector<D>) -> Self {
        SimBox {
            lower: sub(self.lower, z),
            upper: sub(self.upper, z),
            periodic: self.periodic,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum GeneratorTag {
    Poisson,
    PerturbedLattice,
    Explicit,
}

impl GeneratorTag {
    fn as_str(self) -> &'static str {
        match self {
            GeneratorTag::Poisson => "poisson",
            GeneratorTag::PerturbedLattice => "perturbed_lattice",
            GeneratorTag::Explicit => "explicit",
        }
    }

    fn parse(s: &str) -> Option<Self> {
        match s {
            "poisson" => Some(GeneratorTag::Poisson),
            "perturbed_lattice" => Some(GeneratorTag::PerturbedLattice),
            "explicit" => Some(GeneratorTag::Explicit),
            _ => None,
        }
    }
}

/// Reproducible random stream: identical (seed, stream_id) yields identical
/// draws on every run and thread layout.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct RngStream {
    pub seed: u64,
    pub stream_id: u64,
}

impl RngStream {
    pub fn new(seed: u64, stream_id: u64) -> Self {
        RngStream { seed, stream_id }
    }

    /// Derive a sub-stream; used for per-path / per-replicate fan-out.
    pub fn substream(&self, k: u64) -> Self {
        RngStream {
            seed: self.seed,
            stream_id: self
                .stream_id
                .wrapping_mul(0x9e37_79b9_7f4a_7c15)
                .wrapping_add(k),
        }
    }

    pub fn rng(&self) -> ChaCha8Rng {
        let mut r = ChaCha8Rng::seed_from_u64(self.seed);
        r.set_stream(self.stream_id);
        r
    }
}

/// A finite point configuration in a box.
#[derive(Debug, Clone, PartialEq)]
pub struct Configuration<const D: usize> {
    pub domain: SimBox<D>,
    pub points: Vec<Vector<D>>,
    pub seed: u64,
    pub generator: GeneratorTag,
}

impl<const D: usize> Configuration<D> {
    /// Build an explicit configuration, validating membership, finiteness and
    /// pairwise distinctness.
    pub fn explicit(domain: SimBox<D>, points: Vec<Vector<D>>, seed: u64) -> Result<Self> {
        let mut seen: HashSet<[u64; D]> = HashSet::with_capacity(points.len());
        for (i, p) in points.iter().enumerate() {
            for (axis, v) in p.iter().enumerate() {
                if !v.is_finite() {
                    return Err(Error::invalid(format!(
                        "point {i} axis {axis} is not finite"
                    )));
                }
            }
            if !domain.contains(*p) {
                return Err(Error::invalid(format!("point {i} lies outside the box")));
            }
            if !seen.insert(std::array::from_fn(|k| p[k].to_bits())) {
                return Err(Error::invalid(format!(
                    "point {i} duplicates an earlier point"
                )));
            }
        }
        Ok(Configuration {
            domain,
            points,
            seed,
            generator: GeneratorTag::Explicit,
        })
    }

    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }
}

/// Poisson point process with the given intensity (points per unit volume).
pub fn sample_poisson<const D: usize>(
    intensity: f64,
    domain: SimBox<D>,
    stream: RngStream,
) -> Result<Configuration<D>> {
    if !(intensity > 0.0) || !intensity.is_finite() {
        return Err(Error::invalid(format!(
            "poisson intensity must be positive and finite, got {intensity}"
        )));
    }
    let mut rng = stream.rng();
    let mean = intensity * domain.volume();
    let n = Poisson::new(mean)
        .map_err(|e| Error::invalid(format!("poisson mean {mean}: {e}")))?
        .sample(&mut rng) as usize;
    let mut points = Vec::with_capacity(n);
    for _ in 0..n {
        points.push(std::array::from_fn(|i| {
            domain.lower[i] + domain.side(i) * rng.random::<f64>()
        }));
    }
    Ok(Configuration {
        domain,
        points,
        seed: stream.seed,
        generator: GeneratorTag::Poisson,
    })
}

/// Bernoulli-thinned integer lattice, all kept sites sharing one uniform
/// offset. The offset is quantized to multiples of 2⁻³², so differences of
/// point coordinates are exact integers and the lattice's finite set of
/// inter-point distances survives in floating point.
pub fn sample_perturbed_lattice<const D: usize>(
    p: f64,
    domain: SimBox<D>,
    stream: RngStream,
) -> Result<Configuration<D>> {
    if !(p > 0.0 && p < 1.0) {
        return Err(Error::invalid(format!(
            "perturbed-lattice keep probability must lie in (0,1), got {p}"
        )));
    }
    for i in 0..D {
        if domain.lower[i].fract() != 0.0 || domain.upper[i].fract() != 0.0 {
            return Err(Error::invalid(
                "perturbed-lattice box edges must be aligned with integer lattice cells",
            ));
        }
    }
    let mut rng = stream.rng();
    let offset: Vector<D> = std::array::from_fn(|_| rng.random::<u32>() as f64 / 4294967296.0);
    let lo: [i64; D] = std::array::from_fn(|i| domain.lower[i] as i64);
    let hi: [i64; D] = std::array::from_fn(|i| domain.upper[i] as i64);
    let mut points = Vec::new();
    let mut site = lo;
    'outer: loop {
        if rng.random::<f64>() < p {
            points.push(std::array::from_fn(|i| site[i] as f64 + offset[i]));
        }
        // lexicographic advance
        for axis in (0..D).rev() {
            site[axis] += 1;
            if site[axis] < hi[axis] {
                continue 'outer;
            }
            site[axis] = lo[axis];
            if axis == 0 {
                break 'outer;
            }
        }
    }
    Ok(Configuration {
        domain,
        points,
        seed: stream.seed,
        generator: GeneratorTag::PerturbedLattice,
    })
}

/// Translate every point (and the box) by −z.
pub fn shift<const D: usize>(config: &Configuration<D>, z: Vector<D>) -> Configuration<D> {
    Configuration {
        domain: config.domain.translated(z),
        points: config.points.iter().map(|&p| sub(p, z)).collect(),
        seed: config.seed,
        generator: config.generator,
    }
}

const BINARY_MAGIC: &[u8; 6] = b"PCFGB1";

/// Write the text format (`pcfg v1`). Coordinates use Rust's shortest
/// round-trip decimal formatting, so `load_config` recovers them bit-exactly.
pub fn save_config<const D: usize>(config: &Configuration<D>, path: &Path) -> Result<()> {
    let mut out = String::new();
    out.push_str(&format!(
        "pcfg v1 dim={} periodic={}\n",
        D,
        if config.domain.periodic { 1 } else { 0 }
    ));
    out.push_str("box");
    for v in config.domain.lower.iter().chain(config.domain.upper.iter()) {
        out.push_str(&format!(" {v}"));
    }
    out.push('\n');
    out.push_str(&format!(
        "meta seed={} gen={}\n",
        config.seed,
        config.generator.as_str()
    ));
    for p in &config.points {
        let mut first = true;
        for v in p {
            if !first {
                out.push(' ');
            }
            out.push_str(&format!("{v}"));
            first = false;
        }
        out.push('\n');
    }
    std::fs::write(path, out)?;
    Ok(())
}

/// Write the binary format (magic `PCFGB1`, little-endian payload).
pub fn save_config_binary<const D: usize>(config: &Configuration<D>, path: &Path) -> Result<()> {
    let mut buf: Vec<u8> = Vec::with_capacity(32 + config.points.len() * D * 8);
    buf.extend_from_slice(BINARY_MAGIC);
    buf.push(D as u8);
    buf.push(config.domain.periodic as u8);
    buf.push(match config.generator {
        GeneratorTag::Poisson => 0,
        GeneratorTag::PerturbedLattice => 1,
        GeneratorTag::Explicit => 2,
    });
    buf.push(0);
    buf.extend_from_slice(&config.seed.to_le_bytes());
    for v in config.domain.lower.iter().chain(config.domain.upper.iter()) {
        buf.extend_from_slice(&v.to_le_bytes());
    }
    buf.extend_from_slice(&(config.points.len() as u64).to_le_bytes());
    for p in &config.points {
        for v in p {
            buf.extend_from_slice(&v.to_le_bytes());
        }
    }
    std::fs::write(path, buf)?;
    Ok(())
}

/// Load either format, sniffing the binary magic.
pub fn load_config<const D: usize>(path: &Path) -> Result<Configuration<D>> {
    let mut file = std::fs::File::open(path)?;
    let mut magic = [0u8; 6];
    let n = file.read(&mut magic)?;
    if n == 6 && &magic == BINARY_MAGIC {
        let mut rest = Vec::new();
        file.read_to_end(&mut rest)?;
        return load_binary::<D>(path, &rest);
    }
    drop(file);
    load_text::<D>(path)
}

fn parse_err(path: &Path, line: usize, message: impl Into<String>) -> Error {
    Error::Parse {
        path: path.display().to_string(),
        line,
        message: message.into(),
    }
}

fn parse_coord(path: &Path, line: usize, tok: &str) -> Result<f64> {
    let v: f64 = tok
        .parse()
        .map_err(|_| parse_err(path, line, format!("cannot parse coordinate `{tok}`")))?;
    if !v.is_finite() {
        return Err(parse_err(
            path,
            line,
            format!("non-finite coordinate `{tok}`"),
        ));
    }
    Ok(v)
}

fn load_text<const D: usize>(path: &Path) -> Result<Configuration<D>> {
    let reader = BufReader::new(std::fs::File::open(path)?);
    let mut lines = reader.lines().enumerate();

    let (_, header) = lines
        .next()
        .ok_or_else(|| parse_err(path, 1, "empty file"))?;
    let header = header?;
    let toks: Vec<&str> = header.split_whitespace().collect();
    if toks.len() != 4 || toks[0] != "pcfg" || toks[1] != "v1" {
        return Err(parse_err(
            path,
            1,
            "expected header `pcfg v1 dim=<d> periodic=<0|1>`",
        ));
    }
    let dim: usize = toks[2]
        .strip_prefix("dim=")
        .and_then(|s| s.parse().ok())
        .ok_or_else(|| parse_err(path, 1, "bad dim field"))?;
    if dim != D {
        return Err(parse_err(
            path,
            1,
            format!("dimension mismatch: file has dim={dim}, expected {D}"),
        ));
    }
    let periodic = match toks[3].strip_prefix("periodic=") {
        Some("0") => false,
        Some("1") => true,
        _ => return Err(parse_err(path, 1, "bad periodic field")),
    };

    let (_, box_line) = lines
        .next()
        .ok_or_else(|| parse_err(path, 2, "missing box line"))?;
    let box_line = box_line?;
    let toks: Vec<&str> = box_line.split_whitespace().collect();
    if toks.len() != 1 + 2 * D || toks[0] != "box" {
        return Err(parse_err(
            path,
            2,
            format!("expected `box` with {} coordinates", 2 * D),
        ));
    }
    let mut lower = [0.0; D];
    let mut upper = [0.0; D];
    for i in 0..D {
        lower[i] = parse_coord(path, 2, toks[1 + i])?;
        upper[i] = parse_coord(path, 2, toks[1 + D + i])?;
    }
    let domain =
        SimBox::new(lower, upper, periodic).map_err(|e| parse_err(path, 2, e.to_string()))?;

    let (_, meta) = lines
        .next()
        .ok_or_else(|| parse_err(path, 3, "missing meta line"))?;
    let meta = meta?;
    let toks: Vec<&str> = meta.split_whitespace().collect();
    if toks.len() != 3 || toks[0] != "meta" {
        return Err(parse_err(path, 3, "expected `meta seed=<u64> gen=<tag>`"));
    }
    let seed: u64 = toks[1]
        .strip_prefix("seed=")
        .and_then(|s| s.parse().ok())
        .ok_or_else(|| parse_err(path, 3, "bad seed field"))?;
    let generator = toks[2]
        .strip_prefix("gen=")
        .and_then(GeneratorTag::parse)
        .ok_or_else(|| parse_err(path, 3, "bad gen field"))?;

    let mut points = Vec::new();
    for (idx, line) in lines {
        let line = line?;
        let lineno = idx + 1;
        if line.trim().is_empty() {
            continue;
        }
        let toks: Vec<&str> = line.split_whitespace().collect();
        if toks.len() != D {
            return Err(parse_err(
                path,
                lineno,
                format!("expected {D} coordinates, found {}", toks.len()),
            ));
        }
        let mut p = [0.0; D];
        for i in 0..D {
            p[i] = parse_coord(path, lineno, toks[i])?;
        }
        if !domain.contains(p) {
            return Err(parse_err(path, lineno, "point outside the declared box"));
        }
        points.push(p);
    }
    Ok(Configuration {
        domain,
        points,
        seed,
        generator,
    })
}

fn load_binary<const D: usize>(path: &Path, rest: &[u8]) -> Result<Configuration<D>> {
    let need = 4 + 8 + 16 * D + 8;
    if rest.len() < need {
        return Err(parse_err(path, 0, "binary payload truncated"));
    }
    let dim = rest[0] as usize;
    if dim != D {
        return Err(parse_err(
            path,
            0,
            format!("dimension mismatch: file has dim={dim}, expected {D}"),
        ));
    }
    let periodic = rest[1] != 0;
    let generator = match rest[2] {
        0 => GeneratorTag::Poisson,
        1 => GeneratorTag::PerturbedLattice,
        2 => GeneratorTag::Explicit,
        g => return Err(parse_err(path, 0, format!("unknown generator tag {g}"))),
    };
    let mut off = 4;
    let read_u64 = |b: &[u8], o: usize| u64::from_le_bytes(b[o..o + 8].try_into().unwrap());
    let read_f64 = |b: &[u8], o: usize| f64::from_le_bytes(b[o..o + 8].try_into().unwrap());
    let seed = read_u64(rest, off);
    off += 8;
    let mut lower = [0.0; D];
    let mut upper = [0.0; D];
    for v in lower.iter_mut().chain(upper.iter_mut()) {
        *v = read_f64(rest, off);
        off += 8;
    }
    let domain =
        SimBox::new(lower, upper, periodic).map_err(|e| parse_err(path, 0, e.to_string()))?;
    let count = read_u64(rest, off) as usize;
    off += 8;
    if rest.len() < off + count * D * 8 {
        return Err(parse_err(
            path,
            0,
            "binary payload shorter than point count",
        ));
    }
    let mut points = Vec::with_capacity(count);
    for k in 0..count {
        let mut p = [0.0; D];
        for v in p.iter_mut() {
            *v = read_f64(rest, off);
            off += 8;
        }
        if p.iter().any(|v| !v.is_finite()) {
            return Err(parse_err(
                path,
                0,
                format!("non-finite coordinate in point {k}"),
            ));
        }
        if !domain.contains(p) {
            return Err(parse_err(
                path,
                0,
                format!("point {k} outside the declared box"),
            ));
        }
        points.push(p);
    }
    Ok(Configuration {
        domain,
        points,
        seed,
        generator,
    })
}

/// Convenience used by CLI and tests: write in the requested format.
pub fn save_config_as<const D: usize>(
    config: &Configuration<D>,
    path: &Path,
    binary: bool,
) -> Result<()> {
    if binary {
        save_config_binary(config, path)
    } else {
        save_config(config, path)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::linalg::dist_sq;

    fn tmpfile(name: &str) -> std::path::PathBuf {
        let mut p = std::env::temp_dir();
        p.push(format!("percohom_cfg_{}_{}", std::process::id(), name));
        p
    }

    #[test]
    fn poisson_is_deterministic_per_stream() {
        let b = SimBox::<2>::unit(10.0);
        let a = sample_poisson(0.5, b, RngStream::new(7, 3)).unwrap();
        let c = sample_poisson(0.5, b, RngStream::new(7, 3)).unwrap();
        assert_eq!(a.points, c.points);
        let d = sample_poisson(0.5, b, RngStream::new(7, 4)).unwrap();
        assert_ne!(a.points, d.points);
    }

    #[test]
    fn poisson_mean_and_variance_match_the_law() {
        // Monte Carlo oracle: empirical mean within 4·SE of λ|box|,
        // variance/mean within 5% of 1.
        let b = SimBox::<2>::unit(10.0);
        let lam = 1.0; // λ|box| = 100
        let n_seeds = 10_000;
        let mut counts = Vec::with_capacity(n_seeds);
        for s in 0..n_seeds {
            let c = sample_poisson(lam, b, RngStream::new(1000 + s as u64, 0)).unwrap();
            counts.push(c.len() as f64);
        }
        let mean = counts.iter().sum::<f64>() / n_seeds as f64;
        let var =
            counts.iter().map(|c| (c - mean) * (c - mean)).sum::<f64>() / (n_seeds as f64 - 1.0);
        let se = (100.0_f64 / n_seeds as f64).sqrt();
        assert!((mean - 100.0).abs() < 4.0 * se, "mean {mean}");
        assert!((var / mean - 1.0).abs() < 0.05, "var/mean {}", var / mean);
    }

    #[test]
    fn poisson_nearly_null_intensity_gives_empty_configuration() {
        let b = SimBox::<2>::unit(1.0);
        let c = sample_poisson(1e-6, b, RngStream::new(5, 0)).unwrap();
        assert_eq!(c.len(), 0);
    }

    #[test]
    fn poisson_rejects_bad_intensity() {
        let b = SimBox::<2>::unit(1.0);
        assert!(sample_poisson(0.0, b, RngStream::new(0, 0)).is_err());
        assert!(sample_poisson(-1.0, b, RngStream::new(0, 0)).is_err());
        assert!(sample_poisson(f64::INFINITY, b, RngStream::new(0, 0)).is_err());
    }

    #[test]
    fn perturbed_lattice_keeps_all_sites_at_p_close_to_one() {
        let b = SimBox::<2>::unit(10.0);
        let c = sample_perturbed_lattice(1.0 - 1e-9, b, RngStream::new(11, 0)).unwrap();
        assert_eq!(c.len(), 100);
        for p in &c.points {
            assert!(b.contains(*p));
        }
    }

    #[test]
    fn perturbed_lattice_distances_are_integer_lattice_distances() {
        // The shared offset cancels: squared distances are exact integers.
        let b = SimBox::<2>::unit(16.0);
        let c = sample_perturbed_lattice(0.6, b, RngStream::new(3, 1)).unwrap();
        assert!(c.len() > 50);
        for i in 0..c.len().min(40) {
            for j in (i + 1)..c.len().min(40) {
                let d2 = dist_sq(c.points[i], c.points[j]);
                assert_eq!(d2, d2.round(), "distance² {d2} not an integer");
            }
        }
    }

    #[test]
    fn perturbed_lattice_keep_fraction_matches_p() {
        let b = SimBox::<2>::unit(1000.0); // 10⁶ sites
        let p = 0.37;
        let c = sample_perturbed_lattice(p, b, RngStream::new(21, 0)).unwrap();
        let frac = c.len() as f64 / 1e6;
        assert!((frac - p).abs() < 0.003, "keep fraction {frac}");
    }

    #[test]
    fn perturbed_lattice_rejects_bad_p_and_unaligned_box() {
        let b = SimBox::<2>::unit(4.0);
        assert!(sample_perturbed_lattice(1.5, b, RngStream::new(0, 0)).is_err());
        assert!(sample_perturbed_lattice(0.0, b, RngStream::new(0, 0)).is_err());
        let misaligned = SimBox::<2>::new([0.25, 0.0], [4.25, 4.0], false).unwrap();
        assert!(sample_perturbed_lattice(0.5, misaligned, RngStream::new(0, 0)).is_err());
    }

    /// Snap to multiples of 2⁻²⁰ so float subtraction below is exact.
    fn snap(x: f64) -> f64 {
        (x * 1048576.0).round() / 1048576.0
    }

    #[test]
    fn shift_is_exact_pointwise_and_a_group_action_on_dyadic_data() {
        let b = SimBox::<2>::new([0.0, 0.0], [8.0, 8.0], false).unwrap();
        let mut rng = RngStream::new(2, 0).rng();
        let points: Vec<[f64; 2]> = (0..50)
            .map(|_| {
                [
                    snap(rng.random::<f64>() * 8.0),
                    snap(rng.random::<f64>() * 8.0),
                ]
            })
            .collect();
        let c = Configuration::explicit(b, points, 2).unwrap();

        let zero = shift(&c, [0.0, 0.0]);
        assert_eq!(zero, c);

        let z1 = [snap(0.317), snap(-1.25)];
        let z2 = [snap(2.5), snap(0.875)];
        let s1 = shift(&c, z1);
        for (orig, moved) in c.points.iter().zip(s1.points.iter()) {
            assert_eq!(moved[0], orig[0] - z1[0]);
            assert_eq!(moved[1], orig[1] - z1[1]);
        }
        let s12 = shift(&s1, z2);
        let sboth = shift(&c, [z1[0] + z2[0], z1[1] + z2[1]]);
        assert_eq!(s12, sboth);
        let back = shift(&s1, [-z1[0], -z1[1]]);
        assert_eq!(back, c);
    }

    #[test]
    fn text_round_trip_is_exact() {
        let b = SimBox::<3>::unit(5.0);
        let c = sample_poisson(1.3, b, RngStream::new(77, 0)).unwrap();
        let path = tmpfile("rt.pcfg");
        save_config(&c, &path).unwrap();
        let d: Configuration<3> = load_config(&path).unwrap();
        assert_eq!(c, d);
        std::fs::remove_file(&path).ok();
    }

    #[test]
    fn binary_round_trip_is_exact_and_sniffed() {
        let b = SimBox::<2>::unit(5.0);
        let c = sample_poisson(2.0, b, RngStream::new(78, 0)).unwrap();
        let path = tmpfile("rt.pcfgb");
        save_config_binary(&c, &path).unwrap();
        let d: Configuration<2> = load_config(&path).unwrap();
        assert_eq!(c, d);
        std::fs::remove_file(&path).ok();
    }

    #[test]
    fn empty_configuration_round_trips() {
        let b = SimBox::<2>::unit(1.0);
        let c = Configuration::explicit(b, vec![], 0).unwrap();
        let path = tmpfile("empty.pcfg");
        save_config(&c, &path).unwrap();
        let d: Configuration<2> = load_config(&path).unwrap();
        assert_eq!(c, d);
        std::fs::remove_file(&path).ok();
    }

    #[test]
    fn loader_names_the_offending_line() {
        let path = tmpfile("bad.pcfg");
        std::fs::write(
            &path,
            "pcfg v1 dim=2 periodic=0\nbox 0 0 4 4\nmeta seed=1 gen=explicit\n1.0 NaN\n",
        )
        .unwrap();
        let err = load_config::<2>(&path).unwrap_err();
        match err {
            Error::Parse { line, .. } => assert_eq!(line, 4),
            other => panic!("expected parse error, got {other:?}"),
        }
        std::fs::remove_file(&path).ok();
    }

    #[test]
    fn loader_rejects_dimension_mismatch() {
        let path = tmpfile("dim.pcfg");
        std::fs::write(
            &path,
            "pcfg v1 dim=3 periodic=0\nbox 0 0 0 4 4 4\nmeta seed=1 gen=explicit\n",
        )
        .unwrap();
        assert!(load_config::<2>(&path).is_err());
        std::fs::remove_file(&path).ok();
    }

    mod properties {
        use super::*;
        use proptest::prelude::*;

        proptest! {
            #![proptest_config(ProptestConfig::with_cases(64))]
            #[test]
            fn text_round_trip_is_exact_for_arbitrary_points(
                raw in proptest::collection::vec((0.0f64..16.0, 0.0f64..16.0), 0..40),
                seed in any::<u64>(),
            ) {
                let b = SimBox::<2>::unit(16.0);
                let mut points: Vec<[f64; 2]> = raw.into_iter().map(|(x, y)| [x, y]).collect();
                points.sort_by(|a, b| a.partial_cmp(b).unwrap());
                points.dedup();
                let c = Configuration::explicit(b, points, seed).unwrap();
                let path = tmpfile(&format!("prop_{seed}.pcfg"));
                save_config(&c, &path).unwrap();
                let d: Configuration<2> = load_config(&path).unwrap();
                std::fs::remove_file(&path).ok();
                prop_assert_eq!(c, d);
            }

            #[test]
            fn shift_round_trip_is_exact_on_dyadic_inputs(
                raw in proptest::collection::vec((0u32..1 << 24, 0u32..1 << 24), 1..30),
                zx in -(1i64 << 20)..(1 << 20),
                zy in -(1i64 << 20)..(1 << 20),
            ) {
                // multiples of 2^-20 in a 2^4 box: all shift arithmetic exact
                let b = SimBox::<2>::unit(16.0);
                let mut points: Vec<[f64; 2]> = raw
                    .into_iter()
                    .map(|(x, y)| [x as f64 / (1u64 << 20) as f64, y as f64 / (1u64 << 20) as f64])
                    .collect();
                points.sort_by(|a, b| a.partial_cmp(b).unwrap());
                points.dedup();
                let c = Configuration::explicit(b, points, 1).unwrap();
                let z = [zx as f64 / 1024.0, zy as f64 / 1024.0];
                let back = shift(&shift(&c, z), [-z[0], -z[1]]);
                prop_assert_eq!(c, back);
            }
        }
    }

    #[test]
    fn loader_rejects_malformed_header() {
        let path = tmpfile("hdr.pcfg");
        std::fs::write(&path, "pcfg v9 dim=2\n").unwrap();
        let err = load_config::<2>(&path).unwrap_err();
        match err {
            Error::Parse { line, .. } => assert_eq!(line, 1),
            other => panic!("expected parse error, got {other:?}"),
        }
        std::fs::remove_file(&path).ok();
    }
}
