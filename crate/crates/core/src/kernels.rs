// SPDX-License-Identifier: Apache-2.0

//! Workload cost descriptors.
//!
//! A kernel is reduced to what the offload protocol sees of it: the DMA
//! transfers that fill a cluster's TCDM, the compute time on that cluster
//! and the bytes written back. No arithmetic on the actual data happens.

use std::collections::BTreeMap;
use std::fmt;

use evalexpr::{ContextWithMutableVariables, HashMapContext, Node, Value};
use serde::{Deserialize, Serialize};

use crate::topology::CalibrationConstants;
use crate::{Error, Result};

const F64_BYTES: u64 = 8;

/// Problem dimensions. AXPY uses `n`; ATAX uses `n × m`; GEMM multiplies an
/// `m × k` by a `k × n` matrix.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct ProblemSize {
    pub n: u64,
    pub m: Option<u64>,
    pub k: Option<u64>,
}

impl ProblemSize {
    pub fn vector(n: u64) -> Self {
        Self { n, m: None, k: None }
    }

    pub fn matrix(n: u64, m: u64) -> Self {
        Self {
            n,
            m: Some(m),
            k: None,
        }
    }

    pub fn gemm(m: u64, n: u64, k: u64) -> Self {
        Self {
            n,
            m: Some(m),
            k: Some(k),
        }
    }

    fn m_or_n(&self) -> u64 {
        self.m.unwrap_or(self.n)
    }

    fn k_or_n(&self) -> u64 {
        self.k.unwrap_or(self.n)
    }

    fn dim(&self, d: char) -> u64 {
        match d {
            'M' => self.m_or_n(),
            'K' => self.k_or_n(),
            _ => self.n,
        }
    }
}

impl fmt::Display for ProblemSize {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match (self.m, self.k) {
            (Some(m), Some(k)) => write!(f, "{m}x{}x{k}", self.n),
            (Some(m), None) => write!(f, "{}x{m}", self.n),
            _ => write!(f, "{}", self.n),
        }
    }
}

impl std::str::FromStr for ProblemSize {
    type Err = Error;

    /// `N`, `NxM` or `MxNxK`.
    fn from_str(s: &str) -> Result<Self> {
        let parts: Vec<u64> = s
            .split(['x', 'X'])
            .map(|p| {
                p.trim()
                    .parse::<u64>()
                    .map_err(|_| Error::Config(format!("bad problem size `{s}`")))
            })
            .collect::<Result<_>>()?;
        if parts.contains(&0) {
            return Err(Error::Config(format!("problem size `{s}` has a zero dimension")));
        }
        match parts[..] {
            [n] => Ok(Self::vector(n)),
            [n, m] => Ok(Self::matrix(n, m)),
            [m, n, k] => Ok(Self::gemm(m, n, k)),
            _ => Err(Error::Config(format!("bad problem size `{s}`"))),
        }
    }
}

/// User-defined kernel with cost expressions over `n` (clusters) and the
/// problem dimensions `N`, `M`, `K`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GenericKernelDef {
    /// One expression per input DMA transfer, in bytes per cluster.
    pub inputs: Vec<String>,
    /// Compute cycles per cluster.
    pub compute: String,
    /// Result bytes per cluster.
    pub output: String,
    #[serde(default = "default_generic_args")]
    pub arg_bytes: u64,
    /// Dimension split across clusters (`N`, `M` or `K`); it must be a
    /// multiple of `granule · n`.
    #[serde(default = "default_partition")]
    pub partition: String,
    #[serde(default = "default_granule")]
    pub granule: u64,
}

fn default_generic_args() -> u64 {
    32
}
fn default_partition() -> String {
    "N".into()
}
fn default_granule() -> u64 {
    1
}

#[derive(Debug, Clone)]
struct Compiled {
    inputs: Vec<Node>,
    compute: Node,
    output: Node,
}

#[derive(Debug, Clone)]
enum Kind {
    Axpy,
    Atax { c_atax: f64 },
    Gemm { c_gemm: f64 },
    Generic(Box<(GenericKernelDef, Compiled)>),
}

#[derive(Debug, Clone)]
pub struct KernelSpec {
    name: String,
    kind: Kind,
    arg_bytes: u64,
}

/// Bytes moved and cycles spent by one cluster.
#[derive(Debug, Clone, PartialEq)]
pub struct ClusterWork {
    pub input_transfers: Vec<u64>,
    pub compute_cycles: f64,
    pub result_bytes: u64,
}

impl ClusterWork {
    pub fn operand_bytes_in(&self) -> u64 {
        self.input_transfers.iter().sum()
    }
}

pub fn axpy_spec() -> KernelSpec {
    KernelSpec {
        name: "axpy".into(),
        kind: Kind::Axpy,
        // Job pointer, alpha, N and the x/y base pointers packed in 32 B.
        arg_bytes: 32,
    }
}

pub fn atax_spec(cal: &CalibrationConstants) -> KernelSpec {
    KernelSpec {
        name: "atax".into(),
        kind: Kind::Atax { c_atax: cal.c_atax },
        arg_bytes: 40,
    }
}

pub fn gemm_spec(cal: &CalibrationConstants) -> KernelSpec {
    KernelSpec {
        name: "gemm".into(),
        kind: Kind::Gemm { c_gemm: cal.c_gemm },
        arg_bytes: 48,
    }
}

pub fn generic_spec(name: &str, def: &GenericKernelDef) -> Result<KernelSpec> {
    let compile = |what: &str, e: &str| {
        evalexpr::build_operator_tree(e)
            .map_err(|err| Error::Kernel(format!("{name}.{what}: `{e}`: {err}")))
    };
    if def.inputs.is_empty() {
        return Err(Error::Kernel(format!("{name}: at least one input transfer is required")));
    }
    if !matches!(def.partition.as_str(), "N" | "M" | "K") {
        return Err(Error::Kernel(format!(
            "{name}: partition must be one of N, M, K (got `{}`)",
            def.partition
        )));
    }
    if def.granule == 0 {
        return Err(Error::Kernel(format!("{name}: granule must be positive")));
    }
    let compiled = Compiled {
        inputs: def
            .inputs
            .iter()
            .map(|e| compile("inputs", e))
            .collect::<Result<_>>()?,
        compute: compile("compute", &def.compute)?,
        output: compile("output", &def.output)?,
    };
    Ok(KernelSpec {
        name: name.to_string(),
        kind: Kind::Generic(Box::new((def.clone(), compiled))),
        arg_bytes: def.arg_bytes,
    })
}

/// Kernels known under a name: the three built-ins plus configured ones.
#[derive(Debug, Clone)]
pub struct KernelRegistry {
    kernels: BTreeMap<String, KernelSpec>,
}

impl KernelRegistry {
    pub fn new(cal: &CalibrationConstants, generic: &BTreeMap<String, GenericKernelDef>) -> Result<Self> {
        let mut kernels = BTreeMap::new();
        for k in [axpy_spec(), atax_spec(cal), gemm_spec(cal)] {
            kernels.insert(k.name.clone(), k);
        }
        for (name, def) in generic {
            let name = &name.to_ascii_lowercase();
            if kernels.contains_key(name) {
                return Err(Error::Kernel(format!("`{name}` shadows a built-in kernel")));
            }
            kernels.insert(name.clone(), generic_spec(name, def)?);
        }
        Ok(Self { kernels })
    }

    pub fn get(&self, name: &str) -> Result<&KernelSpec> {
        self.kernels
            .get(&name.to_ascii_lowercase())
            .ok_or_else(|| Error::Config(format!("unknown kernel `{name}`")))
    }

    pub fn names(&self) -> impl Iterator<Item = &str> {
        self.kernels.keys().map(String::as_str)
    }
}

impl KernelSpec {
    pub fn name(&self) -> &str {
        &self.name
    }

    pub fn arg_bytes(&self) -> u64 {
        self.arg_bytes
    }

    pub fn with_arg_bytes(mut self, arg_bytes: u64) -> Self {
        self.arg_bytes = arg_bytes;
        self
    }

    /// Dimension split across clusters and the per-cluster granule it must
    /// be a multiple of.
    pub fn partition(&self) -> (char, u64) {
        match &self.kind {
            Kind::Axpy => ('N', 8),
            Kind::Atax { .. } | Kind::Gemm { .. } => ('M', 1),
            Kind::Generic(g) => {
                let def = &g.0;
                (def.partition.chars().next().unwrap_or('N'), def.granule)
            }
        }
    }

    /// `size` with the partitioned dimension multiplied by `factor`.
    pub fn scaled(&self, size: &ProblemSize, factor: u64) -> ProblemSize {
        let mut s = *size;
        match self.partition().0 {
            'M' => s.m = Some(s.m_or_n() * factor),
            'K' => s.k = Some(s.k_or_n() * factor),
            _ => s.n *= factor,
        }
        s
    }

    /// Checks the divisibility constraint between the problem and the
    /// cluster count.
    pub fn check_partition(&self, clusters: usize, size: &ProblemSize) -> Result<()> {
        if clusters == 0 {
            return Err(Error::Argument("cluster count must be positive".into()));
        }
        let n = clusters as u64;
        let (dim, granule) = self.partition();
        let value = size.dim(dim);
        if !value.is_multiple_of(granule * n) {
            return Err(Error::Partition(format!(
                "{}: {dim} = {value} is not divisible by {} ({granule} x {n} clusters)",
                self.name,
                granule * n
            )));
        }
        Ok(())
    }

    /// Per-cluster work when the job is split over `clusters` clusters.
    pub fn work(&self, clusters: usize, size: &ProblemSize) -> Result<ClusterWork> {
        self.check_partition(clusters, size)?;
        let n = clusters as u64;
        Ok(match &self.kind {
            Kind::Axpy => {
                let slice = size.n / n * F64_BYTES;
                ClusterWork {
                    input_transfers: vec![slice, slice],
                    // Core initialization on top of the cluster barrier.
                    compute_cycles: 50.0 + 1.47 * size.n as f64 / (8.0 * n as f64),
                    result_bytes: slice,
                }
            }
            Kind::Atax { c_atax } => {
                let (nn, m) = (size.n, size.m_or_n());
                ClusterWork {
                    // The whole A matrix and x vector go to every cluster.
                    input_transfers: vec![nn * m * F64_BYTES, nn * F64_BYTES],
                    compute_cycles: c_atax * (nn * m) as f64,
                    result_bytes: nn.div_ceil(n) * F64_BYTES,
                }
            }
            Kind::Gemm { c_gemm } => {
                let (m, nn, k) = (size.m_or_n(), size.n, size.k_or_n());
                ClusterWork {
                    input_transfers: vec![m / n * k * F64_BYTES, k * nn * F64_BYTES],
                    compute_cycles: c_gemm * (m * nn * k) as f64 / (8 * n) as f64,
                    result_bytes: m / n * nn * F64_BYTES,
                }
            }
            Kind::Generic(g) => {
                let compiled = &g.1;
                let mut ctx = HashMapContext::new();
                let vars = [
                    ("n", n as f64),
                    ("N", size.n as f64),
                    ("M", size.m_or_n() as f64),
                    ("K", size.k_or_n() as f64),
                ];
                for (k, v) in vars {
                    ctx.set_value(k.into(), Value::Float(v))
                        .map_err(|e| Error::Kernel(e.to_string()))?;
                }
                let eval = |node: &Node| -> Result<f64> {
                    let v = node
                        .eval_with_context(&ctx)
                        .and_then(|v| v.as_number())
                        .map_err(|e| Error::Kernel(format!("{}: {e}", self.name)))?;
                    if !v.is_finite() || v < 0.0 {
                        return Err(Error::Kernel(format!(
                            "{}: cost evaluates to {v}, expected a non-negative number",
                            self.name
                        )));
                    }
                    Ok(v)
                };
                let bytes = |node: &Node| -> Result<u64> {
                    let v = eval(node)?.ceil() as u64;
                    Ok(v.div_ceil(F64_BYTES) * F64_BYTES)
                };
                ClusterWork {
                    input_transfers: compiled
                        .inputs
                        .iter()
                        .map(bytes)
                        .collect::<Result<Vec<_>>>()?
                        .into_iter()
                        .filter(|&b| b > 0)
                        .collect(),
                    compute_cycles: eval(&compiled.compute)?,
                    result_bytes: bytes(&compiled.output)?,
                }
            }
        })
    }

    pub fn operand_bytes_in(&self, clusters: usize, size: &ProblemSize) -> Result<u64> {
        Ok(self.work(clusters, size)?.operand_bytes_in())
    }

    pub fn compute_cycles(&self, clusters: usize, size: &ProblemSize) -> Result<f64> {
        Ok(self.work(clusters, size)?.compute_cycles)
    }

    pub fn result_bytes_out(&self, clusters: usize, size: &ProblemSize) -> Result<u64> {
        Ok(self.work(clusters, size)?.result_bytes)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx_eq::assert_close;

    mod approx_eq {
        macro_rules! assert_close {
            ($a:expr, $b:expr) => {
                let (a, b): (f64, f64) = ($a, $b);
                assert!((a - b).abs() < 1e-9, "{a} != {b}");
            };
        }
        pub(crate) use assert_close;
    }

    #[test]
    fn axpy_costs() {
        let k = axpy_spec();
        let s = ProblemSize::vector(1024);
        assert_close!(k.compute_cycles(1, &s).unwrap(), 238.16);
        assert_close!(k.compute_cycles(32, &s).unwrap(), 55.88);
        assert_eq!(k.operand_bytes_in(4, &s).unwrap(), 4096);
        assert_eq!(k.result_bytes_out(4, &s).unwrap(), 2048);
        assert_eq!(k.work(4, &s).unwrap().input_transfers, vec![2048, 2048]);
    }

    #[test]
    fn axpy_partition_rule() {
        let k = axpy_spec();
        assert!(matches!(
            k.work(3, &ProblemSize::vector(1024)),
            Err(Error::Partition(_))
        ));
        // 8n must divide N.
        assert!(k.work(32, &ProblemSize::vector(128)).is_err());
        assert!(k.work(32, &ProblemSize::vector(256)).is_ok());
    }

    #[test]
    fn atax_costs() {
        let cal = CalibrationConstants::default();
        let k = atax_spec(&cal);
        let s = ProblemSize::matrix(64, 64);
        assert_eq!(k.operand_bytes_in(2, &s).unwrap(), 64 * 65 * 8);
        assert_eq!(k.operand_bytes_in(1, &s).unwrap(), 64 * 65 * 8);
        assert_close!(k.compute_cycles(4, &s).unwrap(), cal.c_atax * 4096.0);
        assert!(matches!(k.work(3, &s), Err(Error::Partition(_))));
    }

    #[test]
    fn gemm_costs() {
        let cal = CalibrationConstants::default();
        let k = gemm_spec(&cal);
        let s = ProblemSize::gemm(16, 16, 16);
        assert_eq!(k.operand_bytes_in(1, &s).unwrap(), 4096);
        assert_eq!(k.result_bytes_out(2, &s).unwrap(), 1024);
        assert_close!(k.compute_cycles(2, &s).unwrap(), 256.0);
        assert!(k.work(3, &s).is_err());
    }

    #[test]
    fn work_is_conserved_for_split_kernels() {
        let cal = CalibrationConstants::default();
        for n in [1usize, 2, 4, 8, 16, 32] {
            let s = ProblemSize::vector(4096);
            assert_eq!(axpy_spec().result_bytes_out(n, &s).unwrap() * n as u64, 4096 * 8);
            let g = ProblemSize::gemm(64, 32, 16);
            assert_eq!(
                gemm_spec(&cal).result_bytes_out(n, &g).unwrap() * n as u64,
                64 * 32 * 8
            );
        }
    }

    #[test]
    fn generic_kernel_from_expressions() {
        let def = GenericKernelDef {
            inputs: vec!["N*8/n".into(), "64".into()],
            compute: "10 + 2.5*N/(8*n)".into(),
            output: "N*8/n".into(),
            arg_bytes: 16,
            partition: "N".into(),
            granule: 1,
        };
        let k = generic_spec("montecarlo", &def).unwrap();
        let w = k.work(4, &ProblemSize::vector(256)).unwrap();
        assert_eq!(w.input_transfers, vec![512, 64]);
        assert_close!(w.compute_cycles, 10.0 + 2.5 * 8.0);
        assert_eq!(w.result_bytes, 512);
        assert_eq!(k.arg_bytes(), 16);
        assert!(k.work(3, &ProblemSize::vector(256)).is_err());
    }

    #[test]
    fn generic_kernel_rejects_bad_expressions() {
        let mut def = GenericKernelDef {
            inputs: vec!["(N + 1".into()],
            compute: "1".into(),
            output: "8".into(),
            arg_bytes: 16,
            partition: "N".into(),
            granule: 1,
        };
        assert!(matches!(generic_spec("bad", &def), Err(Error::Kernel(_))));
        def.inputs = vec!["8 - N".into()];
        let k = generic_spec("neg", &def).unwrap();
        assert!(k.work(1, &ProblemSize::vector(64)).is_err());
    }

    #[test]
    fn problem_size_parsing() {
        assert_eq!("1024".parse::<ProblemSize>().unwrap(), ProblemSize::vector(1024));
        assert_eq!("64x32".parse::<ProblemSize>().unwrap(), ProblemSize::matrix(64, 32));
        assert_eq!(
            "16x8x4".parse::<ProblemSize>().unwrap(),
            ProblemSize::gemm(16, 8, 4)
        );
        assert!("0".parse::<ProblemSize>().is_err());
        assert!("a".parse::<ProblemSize>().is_err());
        assert_eq!(ProblemSize::gemm(16, 8, 4).to_string(), "16x8x4");
    }

    #[test]
    fn registry_lookup() {
        let cal = CalibrationConstants::default();
        let r = KernelRegistry::new(&cal, &BTreeMap::new()).unwrap();
        assert_eq!(r.get("AXPY").unwrap().name(), "axpy");
        assert!(r.get("bfs").is_err());
    }
}
