// SPDX-License-Identifier: Apache-2.0

//! Configuration files and environment overrides.
//!
//! A system file is TOML with optional `[topology]`, `[calibration]`,
//! `[kernels.<name>]` and `[plan]` tables. A calibration file is a flat
//! TOML table mixing topology and calibration keys. Environment variables
//! `OFFLOAD_CAL_<KEY>` override single keys of either kind.

use std::collections::BTreeMap;
use std::path::Path;

use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};
use toml::{Table, Value};

use crate::experiment::ExperimentPlan;
use crate::kernels::{GenericKernelDef, KernelRegistry};
use crate::topology::{CalibrationConstants, Topology};
use crate::{Error, Result};

pub const ENV_PREFIX: &str = "OFFLOAD_CAL_";

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SystemConfig {
    pub topology: Topology,
    pub calibration: CalibrationConstants,
    pub kernels: BTreeMap<String, GenericKernelDef>,
    pub plan: Option<ExperimentPlan>,
}

fn read(path: &Path) -> Result<String> {
    std::fs::read_to_string(path)
        .map_err(|e| Error::Config(format!("cannot read {}: {e}", path.display())))
}

fn to_table<T: Serialize>(v: &T) -> Table {
    Table::try_from(v).expect("configuration types serialize to a table")
}

fn from_table<T: DeserializeOwned>(t: Table) -> Result<T> {
    T::deserialize(t).map_err(|e| Error::Config(e.to_string()))
}

impl SystemConfig {
    pub fn from_toml_str(s: &str) -> Result<Self> {
        let cfg: Self = toml::from_str(s).map_err(|e| Error::Config(e.to_string()))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<Self> {
        Self::from_toml_str(&read(path)?)
            .map_err(|e| Error::Config(format!("{}: {e}", path.display())))
    }

    pub fn validate(&self) -> Result<()> {
        self.topology.validate()?;
        self.calibration.validate()
    }

    /// Applies a flat table of topology and calibration keys.
    pub fn apply_overrides(&mut self, flat: &Table) -> Result<()> {
        let mut topo = to_table(&self.topology);
        let mut cal = to_table(&self.calibration);
        for (key, value) in flat {
            if topo.contains_key(key) {
                topo.insert(key.clone(), value.clone());
            } else if cal.contains_key(key) {
                cal.insert(key.clone(), value.clone());
            } else {
                return Err(Error::Config(format!("unknown calibration key `{key}`")));
            }
        }
        self.topology = from_table(topo)?;
        self.calibration = from_table(cal)?;
        self.validate()
    }

    pub fn apply_calibration_str(&mut self, s: &str) -> Result<()> {
        let flat: Table = toml::from_str(s).map_err(|e| Error::Config(e.to_string()))?;
        if let Some((k, _)) = flat.iter().find(|(_, v)| v.is_table()) {
            return Err(Error::Config(format!(
                "calibration files are flat; `{k}` is a table"
            )));
        }
        self.apply_overrides(&flat)
    }

    pub fn apply_calibration_file(&mut self, path: &Path) -> Result<()> {
        self.apply_calibration_str(&read(path)?)
            .map_err(|e| Error::Config(format!("{}: {e}", path.display())))
    }

    /// Applies every `OFFLOAD_CAL_<KEY>=<value>` pair in `vars`; other
    /// variables are ignored.
    pub fn apply_env<I, K, V>(&mut self, vars: I) -> Result<()>
    where
        I: IntoIterator<Item = (K, V)>,
        K: AsRef<str>,
        V: AsRef<str>,
    {
        let mut flat = Table::new();
        for (k, v) in vars {
            let Some(key) = k.as_ref().strip_prefix(ENV_PREFIX) else {
                continue;
            };
            let key = key.to_ascii_lowercase();
            let value = parse_scalar(v.as_ref())
                .ok_or_else(|| Error::Config(format!("{}{}: bad value `{}`", ENV_PREFIX, key.to_ascii_uppercase(), v.as_ref())))?;
            flat.insert(key, value);
        }
        if flat.is_empty() {
            return Ok(());
        }
        self.apply_overrides(&flat)
    }

    pub fn kernel_registry(&self) -> Result<KernelRegistry> {
        KernelRegistry::new(&self.calibration, &self.kernels)
    }
}

fn parse_scalar(s: &str) -> Option<Value> {
    let t: Table = toml::from_str(&format!("v = {}", s.trim())).ok()?;
    let v = t.get("v")?.clone();
    (v.is_integer() || v.is_float()).then_some(v)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn empty_file_gives_defaults() {
        let c = SystemConfig::from_toml_str("").unwrap();
        assert_eq!(c, SystemConfig::default());
    }

    #[test]
    fn sections_override_defaults() {
        let c = SystemConfig::from_toml_str(
            "[topology]\nn_quadrants = 2\n[calibration]\nhost_store_interval = 3\n",
        )
        .unwrap();
        assert_eq!(c.topology.n_quadrants, 2);
        assert_eq!(c.topology.clusters_per_quadrant, 4);
        assert_eq!(c.calibration.host_store_interval, 3);
    }

    #[test]
    fn unknown_keys_are_named() {
        let e = SystemConfig::from_toml_str("[calibration]\nbogus_knob = 1\n").unwrap_err();
        assert!(e.is_config() && e.to_string().contains("bogus_knob"), "{e}");
        let mut c = SystemConfig::default();
        let e = c.apply_calibration_str("other = 2").unwrap_err();
        assert!(e.is_config() && e.to_string().contains("other"), "{e}");
    }

    #[test]
    fn flat_file_mixes_both_kinds() {
        let mut c = SystemConfig::default();
        c.apply_calibration_str("tcdm_bytes = 65536\nphase_a_cost = 7\nc_atax = 3.5\n")
            .unwrap();
        assert_eq!(c.topology.tcdm_bytes, 65536);
        assert_eq!(c.calibration.phase_a_cost, 7);
        assert_eq!(c.calibration.c_atax, 3.5);
    }

    #[test]
    fn invalid_values_are_rejected() {
        let mut c = SystemConfig::default();
        assert!(c.apply_calibration_str("phase_a_cost = -1").is_err());
        assert!(c.apply_calibration_str("cluster_stride_bytes = 1000").is_err());
    }

    #[test]
    fn environment_overrides() {
        let mut c = SystemConfig::default();
        c.apply_env([
            ("OFFLOAD_CAL_PHASE_I_COST", "12"),
            ("OFFLOAD_CAL_CLUSTER_REGION_BASE", "0x2000_0000"),
            ("PATH", "/bin"),
        ])
        .unwrap();
        assert_eq!(c.calibration.phase_i_cost, 12);
        assert_eq!(c.topology.cluster_region_base, 0x2000_0000);
        let e = c.apply_env([("OFFLOAD_CAL_NOPE", "1")]).unwrap_err();
        assert!(e.to_string().contains("nope"));
        assert!(c.apply_env([("OFFLOAD_CAL_PHASE_I_COST", "fast")]).is_err());
    }

    #[test]
    fn generic_kernels_and_plan() {
        let c = SystemConfig::from_toml_str(
            r#"
            [kernels.scale]
            inputs = ["N * 8 / n"]
            compute = "10 + N / n"
            output = "N * 8 / n"

            [plan]
            kernels = ["scale", "axpy"]
            sizes = ["1024", 2048]
            clusters = [1, 2]
            modes = ["extended"]
            "#,
        )
        .unwrap();
        let reg = c.kernel_registry().unwrap();
        assert!(reg.get("SCALE").is_ok());
        let plan = c.plan.unwrap();
        assert_eq!(plan.sizes.len(), 2);
        assert_eq!(plan.sizes[1].n, 2048);
    }
}
