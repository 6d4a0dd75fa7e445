//! CSV, binary and manifest emission.

use std::io;
use std::path::{Path, PathBuf};

use fsdde_core::stability::{AssumptionConstants, ContractionReport, StabilityCertificate};
use fsdde_core::stochastic::{MomentEstimate, SamplePath};
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

pub const MOMENTS_HEADER: [&str; 4] = ["t", "mean_p_moment", "stderr", "n_paths"];

/// Magic bytes opening a binary path dump.
pub const PATHS_MAGIC: [u8; 4] = *b"FSDP";

pub fn sha256_hex(bytes: &[u8]) -> String {
    Sha256::digest(bytes).iter().map(|b| format!("{b:02x}")).collect()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MomentRow {
    pub t: f64,
    pub mean_p_moment: f64,
    pub stderr: f64,
    pub n_paths: usize,
}

pub fn moments_csv(est: &MomentEstimate) -> io::Result<Vec<u8>> {
    let mut w = csv::Writer::from_writer(Vec::new());
    for k in 0..est.times.len() {
        w.serialize(MomentRow {
            t: est.times[k],
            mean_p_moment: est.mean[k],
            stderr: est.stderr[k],
            n_paths: est.n_paths,
        })?;
    }
    w.into_inner().map_err(|e| e.into_error())
}

pub fn read_moments_csv(bytes: &[u8]) -> Result<Vec<MomentRow>, csv::Error> {
    let mut r = csv::Reader::from_reader(bytes);
    let header = r.headers()?.clone();
    if header.iter().ne(MOMENTS_HEADER) {
        return Err(csv::Error::from(io::Error::new(
            io::ErrorKind::InvalidData,
            format!("unexpected header {header:?}"),
        )));
    }
    r.deserialize().collect()
}

/// Rows `path_id,t,y1..yn` over [-h, T] for every path.
pub fn paths_csv(paths: &[SamplePath]) -> io::Result<Vec<u8>> {
    let mut w = csv::Writer::from_writer(Vec::new());
    let Some(first) = paths.first() else {
        return Ok(Vec::new());
    };
    let n = first.values.dim();
    let mut header = vec!["path_id".to_string(), "t".to_string()];
    header.extend((1..=n).map(|i| format!("y{i}")));
    w.write_record(&header)?;
    for sp in paths {
        let grid = sp.values.grid;
        let hs = grid.history_steps() as isize;
        for i in -hs..=grid.n_steps() as isize {
            let mut rec = vec![sp.path_id.to_string(), format!("{:e}", grid.time(i))];
            rec.extend(sp.values.at(i).iter().map(|x| format!("{x:e}")));
            w.write_record(&rec)?;
        }
    }
    w.into_inner().map_err(|e| e.into_error())
}

/// Little-endian dump: magic, n, q, rows per path (u32 each), then each
/// path's values row-major over [-h, T].
pub fn paths_bin(paths: &[SamplePath], q: usize) -> Vec<u8> {
    let (n, rows) = paths.first().map(|p| (p.values.dim(), p.values.len())).unwrap_or((0, 0));
    let mut out = Vec::with_capacity(16 + paths.len() * n * rows * 8);
    out.extend_from_slice(&PATHS_MAGIC);
    for v in [n, q, rows] {
        out.extend_from_slice(&(v as u32).to_le_bytes());
    }
    for sp in paths {
        for x in sp.values.as_slice() {
            out.extend_from_slice(&x.to_le_bytes());
        }
    }
    out
}

/// Constants, contraction report and certificate for one config.
#[derive(Debug, Clone)]
pub struct CertificateReport {
    pub lambda: f64,
    pub p: f64,
    pub gamma: f64,
    pub horizon: f64,
    pub h: f64,
    pub constants: AssumptionConstants,
    pub contraction: ContractionReport,
    pub certificate: StabilityCertificate,
}

impl CertificateReport {
    /// (name, value, formula) triples in output order.
    pub fn entries(&self) -> Vec<(&'static str, f64, &'static str)> {
        let a = &self.constants;
        let c = &self.certificate;
        let k = &self.contraction;
        vec![
            ("lambda", self.lambda, "fractional_order"),
            ("p", self.p, "moment_order"),
            ("gamma", self.gamma, "weight_rate"),
            ("T", self.horizon, "horizon"),
            ("h", self.h, "max(h1,h2)"),
            ("M1", a.m1, "max_t|E^{l,1}(|A|;t)|^p"),
            ("M2", a.m2, "max_t(t^{1-l}E^{l,l}(|A|;t))^p"),
            ("M3", a.m3, "max_t(int_{t-h2}^t E^{l,0}(|A|;u)du)^p/h2^{p-1}"),
            ("M4", a.m4, "max_t(t^{1-l}E^{l,l}(|A|;t))^p"),
            ("Phi", a.phi_max, "max|phi|"),
            ("F", a.f_at_zero, "max_t|f(t,0,0,0)|^p"),
            ("L_f", a.lf, "declared"),
            ("L_sigma", a.lsig, "declared"),
            ("C_p", a.cp, "BDG"),
            ("norm_A0", a.norms[0], "operator_norm"),
            ("norm_A1", a.norms[1], "operator_norm"),
            ("norm_A2", a.norms[2], "operator_norm"),
            ("K", k.k_value, "6^{p-1}Gamma(pl-p+1)M4/gamma*(L_f^pT^{p-1}+L_sigma^pT^{(p-2)/2})"),
            ("K_f", k.addend_f, "6^{p-1}Gamma(pl-p+1)M4/gamma*L_f^pT^{p-1}"),
            ("K_sigma", k.addend_sigma, "6^{p-1}Gamma(pl-p+1)M4/gamma*L_sigma^pT^{(p-2)/2}"),
            ("C", c.c_const, "5^{p-1}(L_f+C_pL_sigma)T^{p-1}M4"),
            ("M_tilde", c.m_tilde, "5^{p-1}M1(1+|A2|^p)+5^{p-1}(M2|A1|^p+M3|A2|^p)h^{p-1}+2Ch^{(p-1)/p}"),
            ("growth_exponent", c.growth_exponent, "C(3T-h1-h2)"),
            ("offset", c.offset, "5^{p-1}(L_f+C_pL_sigma)T^pM4"),
            ("ln_epsilon", c.ln_epsilon, "ln(epsilon)"),
            ("epsilon", c.epsilon, "epsilon"),
            ("Lambda", c.lambda_threshold, "epsilon/(M_tilde*exp(C(3T-h1-h2)))-offset"),
            ("phi_norm", c.phi_norm, "Phi^p"),
        ]
    }

    pub fn verdict_line(&self) -> String {
        let v = if self.certificate.verdict { "PASS" } else { "FAIL" };
        format!("FTS: {v} on [-{},{}]", self.h, self.horizon)
    }

    /// One `name value formula` line per constant, then the verdict.
    pub fn text(&self) -> String {
        let mut s = String::new();
        for (name, value, formula) in self.entries() {
            s.push_str(&format!("{name} {value:e} {formula}\n"));
        }
        s.push_str(&format!("is_contraction {} K<=1\n", self.contraction.is_contraction));
        s.push_str(&format!("verdict {} FTS\n", if self.certificate.verdict { "PASS" } else { "FAIL" }));
        s.push_str(&format!("# {}\n", self.certificate.diagnostic));
        s
    }

    /// Header and one row with the same names as [`text`](Self::text).
    pub fn csv(&self) -> io::Result<Vec<u8>> {
        let mut w = csv::Writer::from_writer(Vec::new());
        let e = self.entries();
        let mut header: Vec<String> = e.iter().map(|(n, _, _)| n.to_string()).collect();
        header.extend(["is_contraction".to_string(), "verdict".to_string()]);
        w.write_record(&header)?;
        let mut row: Vec<String> = e.iter().map(|(_, v, _)| format!("{v:e}")).collect();
        row.push(self.contraction.is_contraction.to_string());
        row.push(if self.certificate.verdict { "PASS" } else { "FAIL" }.to_string());
        w.write_record(&row)?;
        w.into_inner().map_err(|e| e.into_error())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OutputEntry {
    pub file: String,
    pub sha256: String,
    pub bytes: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunManifest {
    pub artifact_version: String,
    pub command: String,
    pub config_sha256: String,
    pub seed: u64,
    pub n_paths: usize,
    pub wall_time_seconds: f64,
    pub outputs: Vec<OutputEntry>,
}

/// Files written into one output directory, in write order.
#[derive(Debug)]
pub struct OutputSet {
    dir: PathBuf,
    entries: Vec<OutputEntry>,
}

impl OutputSet {
    pub fn create(dir: &Path) -> io::Result<Self> {
        std::fs::create_dir_all(dir)?;
        Ok(Self { dir: dir.to_path_buf(), entries: Vec::new() })
    }

    pub fn path(&self, name: &str) -> PathBuf {
        self.dir.join(name)
    }

    pub fn write(&mut self, name: &str, bytes: &[u8]) -> io::Result<()> {
        std::fs::write(self.dir.join(name), bytes)?;
        self.entries.push(OutputEntry { file: name.to_string(), sha256: sha256_hex(bytes), bytes: bytes.len() });
        Ok(())
    }

    pub fn entries(&self) -> &[OutputEntry] {
        &self.entries
    }

    /// Writes `manifest.json` listing everything written so far.
    pub fn finish(self, command: &str, config_text: &str, seed: u64, n_paths: usize, wall: f64) -> io::Result<PathBuf> {
        let manifest = RunManifest {
            artifact_version: env!("CARGO_PKG_VERSION").to_string(),
            command: command.to_string(),
            config_sha256: sha256_hex(config_text.as_bytes()),
            seed,
            n_paths,
            wall_time_seconds: wall,
            outputs: self.entries,
        };
        let path = self.dir.join("manifest.json");
        let mut text = serde_json::to_string_pretty(&manifest).map_err(io::Error::other)?;
        text.push('\n');
        std::fs::write(&path, text)?;
        Ok(path)
    }
}
