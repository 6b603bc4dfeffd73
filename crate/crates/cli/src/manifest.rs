/// Header lines written at the top of every output file. No wall-clock
/// time, so reruns with the same config and seed are byte-identical.
#[derive(Debug, Clone)]
pub struct RunManifest {
    pub subcommand: String,
    pub config: String,
    pub seed: Option<u64>,
    pub params: Vec<(String, String)>,
}

impl RunManifest {
    pub fn header(&self) -> String {
        let mut out = format!("# rff {}\n# subcommand = {}\n# config = {}\n", env!("CARGO_PKG_VERSION"), self.subcommand, self.config);
        if let Some(s) = self.seed {
            out.push_str(&format!("# seed = {s}\n"));
        }
        for (k, v) in &self.params {
            out.push_str(&format!("# {k} = {v}\n"));
        }
        out
    }
}
