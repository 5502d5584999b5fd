//! Experiment configuration (TOML).

use std::path::Path;
use std::sync::Arc;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::classical::{ClassicalConfig, ClassicalModel};
use crate::detector::{DetectionModel, Geometry, XWindow};
use crate::error::{Error, Result};
use crate::gqs::{EigenGridSpec, EigenTable, GqsBasis};
use crate::inference::{FisherOptions, QuantumModel, ScanOptions, StatisticalModel, DEFAULT_DENSITY_FLOOR};
use crate::physics::{make_context, InitialWavePacket, PhysicalContext, HYDROGEN_MASS, STANDARD_G};
use crate::sampling::Blur;
use crate::special::airy_zeros;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "lowercase")]
pub enum Mode {
    #[default]
    Quantum,
    Classical,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PhysicalSection {
    /// atomic mass (kg)
    pub mass: f64,
    /// reference acceleration `g₀` (m/s²)
    pub g0: f64,
}

impl Default for PhysicalSection {
    fn default() -> Self {
        Self {
            mass: HYDROGEN_MASS,
            g0: STANDARD_G,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PacketSection {
    /// mean height above the mirror `h` (m)
    pub height: f64,
    /// position dispersion `ζ` (m)
    pub width: f64,
    /// horizontal kick `v0` (m/s)
    pub kick_velocity: f64,
}

impl Default for PacketSection {
    fn default() -> Self {
        Self {
            height: 10e-6,
            width: 0.5e-6,
            kick_velocity: 0.25,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct BasisSection {
    /// states kept below the absorber
    pub n_max: usize,
    /// absorber height (m); when set, overrides `n_max` with the number of
    /// states whose classical turning point lies below it
    pub absorber_height: Option<f64>,
    pub eigen: EigenGridSpec,
}

impl Default for BasisSection {
    fn default() -> Self {
        Self {
            n_max: crate::gqs::DEFAULT_STATE_COUNT,
            absorber_height: None,
            eigen: EigenGridSpec::default(),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct GridSection {
    pub x_window: XWindow,
    /// `(X, T)` export bounds; fitted automatically when absent
    pub x_range: Option<[f64; 2]>,
    pub t_range: Option<[f64; 2]>,
    /// mass allowed outside the automatic `(X, T)` bounds
    pub tail: f64,
    pub x_points: usize,
    pub t_points: usize,
    /// half-width of the exported momentum axis (units of p_g)
    pub p_max: f64,
    /// momentum step (units of p_g)
    pub p_step: f64,
    /// time step of the exported momentum density (units of t_g)
    pub t_step: f64,
    /// L1 change at which grid refinement stops
    pub refine_tol: f64,
}

impl Default for GridSection {
    fn default() -> Self {
        Self {
            x_window: XWindow::default(),
            x_range: None,
            t_range: None,
            tail: 1e-4,
            x_points: 600,
            t_points: 1200,
            p_max: 12.0,
            p_step: 1.0 / 16.0,
            t_step: 0.05,
            refine_tol: 1e-2,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct StatisticsSection {
    /// detection events per experiment `N`
    pub n_events: usize,
    /// simulated experiments `M`
    pub ensemble_size: usize,
    pub seed: u64,
    /// apply the detector resolution to sampled events
    pub blur: bool,
    pub blur_sigma_x: f64,
    pub blur_sigma_t: f64,
}

impl Default for StatisticsSection {
    fn default() -> Self {
        let b = Blur::default();
        Self {
            n_events: 800,
            ensemble_size: 2300,
            seed: 2015,
            blur: false,
            blur_sigma_x: b.sigma_x,
            blur_sigma_t: b.sigma_t,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ClassicalSection {
    /// initial position dispersion (m); the packet width when absent
    pub width: Option<f64>,
    pub scan: ScanOptions,
}

impl Default for ClassicalSection {
    fn default() -> Self {
        Self {
            width: None,
            scan: ClassicalModel::default_scan(),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ToleranceSection {
    /// density floor applied before taking logarithms
    pub density_floor: f64,
}

impl Default for ToleranceSection {
    fn default() -> Self {
        Self {
            density_floor: DEFAULT_DENSITY_FLOOR,
        }
    }
}

/// Everything needed to reproduce a run. Defaults describe the reference
/// experiment: d = 5 cm, H = 30 cm, h = 10 μm, ζ = 0.5 μm, v0 = 0.25 m/s,
/// 100 states, N = 800, M = 2300.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize, Default)]
#[serde(default, deny_unknown_fields)]
pub struct ExperimentConfig {
    pub mode: Mode,
    pub physical: PhysicalSection,
    pub packet: PacketSection,
    pub geometry: Geometry,
    pub basis: BasisSection,
    pub grids: GridSection,
    pub statistics: StatisticsSection,
    pub scan: ScanOptions,
    pub fisher: FisherOptions,
    pub classical: ClassicalSection,
    pub tolerances: ToleranceSection,
}

fn check(field: &str, ok: bool, what: &str) -> Result<()> {
    if ok {
        Ok(())
    } else {
        Err(Error::Config(format!("{field}: {what}")))
    }
}

fn positive(field: &str, v: f64) -> Result<()> {
    check(field, v > 0.0 && v.is_finite(), &format!("must be positive and finite (got {v})"))
}

impl ExperimentConfig {
    pub fn from_toml_str(text: &str) -> Result<Self> {
        let cfg: Self = toml::from_str(text).map_err(|e| Error::Config(e.to_string()))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        let cfg: Self = toml::from_str(&text).map_err(|e| Error::Parse {
            path: path.to_path_buf(),
            reason: e.to_string(),
        })?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn to_toml_string(&self) -> String {
        toml::to_string_pretty(self).expect("configuration serializes")
    }

    /// Applies `section.key=value` overrides; the value is parsed as TOML.
    pub fn with_overrides(&self, overrides: &[String]) -> Result<Self> {
        if overrides.is_empty() {
            return Ok(self.clone());
        }
        let mut doc = toml::Value::try_from(self).map_err(|e| Error::Config(e.to_string()))?;
        for item in overrides {
            let (key, raw) = item
                .split_once('=')
                .ok_or_else(|| Error::Config(format!("override `{item}` is not of the form key=value")))?;
            let value: toml::Value = match toml::from_str::<toml::Table>(&format!("v = {raw}")) {
                Ok(mut t) => t.remove("v").expect("parsed key"),
                Err(_) => toml::Value::String(raw.to_string()),
            };
            let mut slot = &mut doc;
            let parts: Vec<&str> = key.trim().split('.').collect();
            for (i, part) in parts.iter().enumerate() {
                let table = slot
                    .as_table_mut()
                    .ok_or_else(|| Error::Config(format!("override `{key}`: `{part}` is not inside a section")))?;
                if i + 1 == parts.len() {
                    table.insert(part.to_string(), value.clone());
                    break;
                }
                slot = table
                    .entry(part.to_string())
                    .or_insert_with(|| toml::Value::Table(toml::Table::new()));
            }
        }
        let cfg: Self = doc.try_into().map_err(|e: toml::de::Error| Error::Config(e.to_string()))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn validate(&self) -> Result<()> {
        positive("physical.mass", self.physical.mass)?;
        positive("physical.g0", self.physical.g0)?;
        positive("packet.height", self.packet.height)?;
        positive("packet.width", self.packet.width)?;
        check("packet.kick_velocity", self.packet.kick_velocity.is_finite(), "must be finite")?;
        check("packet.width", self.packet.width < self.packet.height, "must be smaller than packet.height")?;
        positive("geometry.mirror_length", self.geometry.mirror_length)?;
        positive("geometry.fall_height", self.geometry.fall_height)?;
        check(
            "geometry.fall_height",
            self.geometry.fall_height > crate::detector::MACROSCOPIC_FALL_RATIO * self.packet.height,
            "must exceed 1000 × packet.height",
        )?;
        check("basis.n_max", self.basis.n_max >= 1 && self.basis.n_max <= crate::special::zeros::MAX_ZEROS, "must be in 1..=10000")?;
        if let Some(a) = self.basis.absorber_height {
            positive("basis.absorber_height", a)?;
        }
        check("basis.eigen.z_samples", self.basis.eigen.z_samples >= 1024, "must be at least 1024")?;
        check(
            "basis.eigen.fft_len",
            self.basis.eigen.fft_len >= self.basis.eigen.z_samples && self.basis.eigen.fft_len.is_power_of_two(),
            "must be a power of two no smaller than z_samples",
        )?;
        positive("basis.eigen.kappa_max", self.basis.eigen.kappa_max)?;
        positive("basis.eigen.extent_factor", self.basis.eigen.extent_factor)?;
        positive("grids.x_window.near", self.grids.x_window.near)?;
        check("grids.x_window.far", self.grids.x_window.far > self.grids.x_window.near, "must exceed grids.x_window.near")?;
        for (name, r) in [("grids.x_range", self.grids.x_range), ("grids.t_range", self.grids.t_range)] {
            if let Some([a, b]) = r {
                check(name, a.is_finite() && b > a, "must be an increasing pair")?;
            }
        }
        check("grids.tail", self.grids.tail > 0.0 && self.grids.tail < 0.1, "must be in (0, 0.1)")?;
        check("grids.x_points", self.grids.x_points >= 2, "must be at least 2")?;
        check("grids.t_points", self.grids.t_points >= 2, "must be at least 2")?;
        positive("grids.p_max", self.grids.p_max)?;
        check("grids.p_step", self.grids.p_step > 0.0 && self.grids.p_step < 0.125, "must be in (0, 1/8) p_g")?;
        positive("grids.t_step", self.grids.t_step)?;
        positive("grids.refine_tol", self.grids.refine_tol)?;
        check("statistics.n_events", self.statistics.n_events >= 1, "must be at least 1")?;
        check("statistics.ensemble_size", self.statistics.ensemble_size >= 2, "must be at least 2")?;
        positive("statistics.blur_sigma_x", self.statistics.blur_sigma_x)?;
        positive("statistics.blur_sigma_t", self.statistics.blur_sigma_t)?;
        self.scan.validate().map_err(|e| Error::Config(format!("scan: {e}")))?;
        self.classical.scan.validate().map_err(|e| Error::Config(format!("classical.scan: {e}")))?;
        positive("fisher.delta", self.fisher.delta)?;
        check("fisher.samples", self.fisher.samples >= 2, "must be at least 2")?;
        positive("fisher.kappa_step", self.fisher.kappa_step)?;
        positive("fisher.tail", self.fisher.tail)?;
        if let Some(w) = self.classical.width {
            positive("classical.width", w)?;
        }
        positive("tolerances.density_floor", self.tolerances.density_floor)?;
        Ok(())
    }

    /// First 16 hex digits of the SHA-256 of the canonical JSON form.
    pub fn hash(&self) -> String {
        let json = serde_json::to_string(self).expect("configuration serializes");
        hex16(&Sha256::digest(json.as_bytes()))
    }

    /// Hash of the inputs of the eigenfunction table only.
    pub fn table_hash(&self) -> String {
        let json = serde_json::to_string(&(self.state_count().ok(), &self.basis.eigen)).expect("serializes");
        hex16(&Sha256::digest(json.as_bytes()))
    }

    pub fn context(&self) -> Result<PhysicalContext> {
        make_context(self.physical.mass, self.physical.g0)
    }

    pub fn packet(&self) -> Result<InitialWavePacket> {
        InitialWavePacket::new(self.packet.height, self.packet.width, self.packet.kick_velocity)
    }

    /// Number of states kept, after resolving the absorber height.
    pub fn state_count(&self) -> Result<usize> {
        match self.basis.absorber_height {
            None => Ok(self.basis.n_max),
            Some(a) => {
                let l = self.context()?.length_scale;
                let zeros = airy_zeros(crate::special::zeros::MAX_ZEROS)?;
                let n = zeros.as_slice().iter().take_while(|z| **z * l < a).count();
                check("basis.absorber_height", n >= 1, "lies below the first turning point")?;
                Ok(n)
            }
        }
    }

    pub fn build_table(&self) -> Result<EigenTable> {
        EigenTable::build(self.state_count()?, self.basis.eigen)
    }

    pub fn detection_model(&self, table: Arc<EigenTable>) -> Result<DetectionModel> {
        let basis = GqsBasis::new(self.context()?, self.packet()?, table)?;
        DetectionModel::new(basis, self.geometry, self.grids.x_window)
    }

    pub fn quantum_model(&self, table: Arc<EigenTable>) -> Result<QuantumModel> {
        QuantumModel::new(self.detection_model(table)?, self.tolerances.density_floor)
    }

    pub fn classical_config(&self) -> Result<ClassicalConfig> {
        ClassicalConfig::new(
            self.classical.width.unwrap_or(self.packet.width),
            self.geometry.fall_height,
            self.physical.mass,
        )
    }

    pub fn classical_model(&self) -> Result<ClassicalModel> {
        ClassicalModel::new(self.classical_config()?, self.physical.g0, self.tolerances.density_floor)
    }

    /// Model and scan settings for the configured mode. The table is only
    /// needed in quantum mode.
    pub fn statistical_model(&self, table: Option<Arc<EigenTable>>) -> Result<(Box<dyn StatisticalModel>, ScanOptions)> {
        match self.mode {
            Mode::Quantum => {
                let table = table.ok_or_else(|| Error::Config("quantum mode needs the eigenfunction table".into()))?;
                Ok((Box::new(self.quantum_model(table)?), self.scan))
            }
            Mode::Classical => Ok((Box::new(self.classical_model()?), self.classical.scan)),
        }
    }

    pub fn blur(&self) -> Option<Blur> {
        self.statistics.blur.then_some(Blur {
            sigma_x: self.statistics.blur_sigma_x,
            sigma_t: self.statistics.blur_sigma_t,
        })
    }
}

fn hex16(bytes: &[u8]) -> String {
    bytes.iter().take(8).map(|b| format!("{b:02x}")).collect()
}
