//! Chain persistence: an append-only record file of thinned draws.
//!
//! Layout: a plain-text header (one `key value` pair per line, closed by
//! `end_header`), then fixed-size binary records of little-endian f64, one
//! per retained draw, blocks in the order
//! `sigma (I), q (I*J row-major), x (K*I), y (K*U), v (D*I), gamma (K)`.

use std::io::{BufRead, BufReader, BufWriter, Read, Write};
use std::path::Path;

use ndarray::{Array1, Array2};

use crate::model::{CovariateMatrix, Hyperparams, OtuTable};
use crate::sampler::{Chain, ChainRunner, Checkpoint, Dims, Draw, SamplerConfig};
use crate::{Error, Result};

const MAGIC: &str = "dpfactor-chain v1";

fn record_len(dims: &Dims) -> usize {
    let Dims {
        n_species: i,
        n_samples: j,
        n_individuals: u,
        n_factors: k,
        n_design: d,
    } = *dims;
    i + i * j + k * i + k * u + d * i + k
}

/// Writes header plus any draws; used for whole chains and incrementally.
pub struct ChainWriter {
    out: BufWriter<std::fs::File>,
    dims: Dims,
    written: usize,
}

impl ChainWriter {
    pub fn create(path: &Path, chain_meta: &Chain) -> Result<Self> {
        let mut out = BufWriter::new(std::fs::File::create(path)?);
        writeln!(out, "{MAGIC}")?;
        writeln!(out, "n_species {}", chain_meta.dims.n_species)?;
        writeln!(out, "n_samples {}", chain_meta.dims.n_samples)?;
        writeln!(out, "n_individuals {}", chain_meta.dims.n_individuals)?;
        writeln!(out, "n_factors {}", chain_meta.dims.n_factors)?;
        writeln!(out, "n_design {}", chain_meta.dims.n_design)?;
        writeln!(out, "seed {}", chain_meta.config.seed)?;
        writeln!(out, "stream {}", chain_meta.stream)?;
        writeln!(out, "data_fingerprint {}", chain_meta.data_fingerprint)?;
        let config_json = serde_json::to_string(&chain_meta.config)?;
        writeln!(out, "config {config_json}")?;
        writeln!(out, "config_hash {}", sha256_hex(config_json.as_bytes()))?;
        writeln!(out, "end_header")?;
        Ok(ChainWriter {
            out,
            dims: chain_meta.dims,
            written: 0,
        })
    }

    pub fn append(&mut self, draw: &Draw) -> Result<()> {
        let mut buf = Vec::with_capacity(record_len(&self.dims) * 8);
        for &x in draw
            .sigma
            .iter()
            .chain(draw.q.iter())
            .chain(draw.x.iter())
            .chain(draw.y.iter())
            .chain(draw.v.iter())
            .chain(draw.gamma.iter())
        {
            buf.extend_from_slice(&x.to_le_bytes());
        }
        if buf.len() != record_len(&self.dims) * 8 {
            return Err(Error::dim("draw does not match the chain dimensions".to_string()));
        }
        self.out.write_all(&buf)?;
        self.written += 1;
        Ok(())
    }

    pub fn finish(mut self) -> Result<usize> {
        self.out.flush()?;
        Ok(self.written)
    }
}

fn sha256_hex(bytes: &[u8]) -> String {
    use sha2::{Digest, Sha256};
    let mut h = Sha256::new();
    h.update(bytes);
    format!("{:x}", h.finalize())
}

/// Writes a complete chain.
pub fn save_chain(path: &Path, chain: &Chain) -> Result<()> {
    let mut w = ChainWriter::create(path, chain)?;
    for d in &chain.draws {
        w.append(d)?;
    }
    w.finish()?;
    Ok(())
}

/// Reads a chain file back; draws are read until end of file.
pub fn load_chain(path: &Path) -> Result<Chain> {
    let file = std::fs::File::open(path)?;
    let mut reader = BufReader::new(file);
    let mut line = String::new();
    reader.read_line(&mut line)?;
    if line.trim_end() != MAGIC {
        return Err(Error::parse(1, format!("not a chain file (header '{}')", line.trim_end())));
    }
    let mut fields: std::collections::HashMap<String, String> = std::collections::HashMap::new();
    let mut line_no = 1;
    loop {
        line.clear();
        line_no += 1;
        if reader.read_line(&mut line)? == 0 {
            return Err(Error::parse(line_no, "chain header not terminated"));
        }
        let trimmed = line.trim_end();
        if trimmed == "end_header" {
            break;
        }
        let (key, value) = trimmed
            .split_once(' ')
            .ok_or_else(|| Error::parse(line_no, format!("malformed header line '{trimmed}'")))?;
        fields.insert(key.to_string(), value.to_string());
    }
    let get = |key: &str| -> Result<&String> {
        fields
            .get(key)
            .ok_or_else(|| Error::parse(0, format!("chain header missing '{key}'")))
    };
    let parse_usize = |key: &str| -> Result<usize> {
        get(key)?
            .parse()
            .map_err(|_| Error::parse(0, format!("chain header field '{key}' not an integer")))
    };
    let dims = Dims {
        n_species: parse_usize("n_species")?,
        n_samples: parse_usize("n_samples")?,
        n_individuals: parse_usize("n_individuals")?,
        n_factors: parse_usize("n_factors")?,
        n_design: parse_usize("n_design")?,
    };
    let stream: u64 = get("stream")?
        .parse()
        .map_err(|_| Error::parse(0, "bad stream".to_string()))?;
    let config: SamplerConfig = serde_json::from_str(get("config")?)?;
    let data_fingerprint = get("data_fingerprint")?.clone();

    let rec = record_len(&dims);
    let mut bytes = Vec::new();
    reader.read_to_end(&mut bytes)?;
    if bytes.len() % (rec * 8) != 0 {
        return Err(Error::parse(
            0,
            format!(
                "chain payload of {} bytes is not a whole number of {}-value records",
                bytes.len(),
                rec
            ),
        ));
    }
    let n_draws = bytes.len() / (rec * 8);
    let mut draws = Vec::with_capacity(n_draws);
    let (i, j, u, k, d) = (
        dims.n_species,
        dims.n_samples,
        dims.n_individuals,
        dims.n_factors,
        dims.n_design,
    );
    let mut offset = 0usize;
    let mut next = |count: usize| -> Vec<f64> {
        let vals: Vec<f64> = bytes[offset..offset + count * 8]
            .chunks_exact(8)
            .map(|c| f64::from_le_bytes(c.try_into().expect("chunk of 8")))
            .collect();
        offset += count * 8;
        vals
    };
    for _ in 0..n_draws {
        draws.push(Draw {
            sigma: Array1::from(next(i)),
            q: Array2::from_shape_vec((i, j), next(i * j)).expect("checked shape"),
            x: Array2::from_shape_vec((k, i), next(k * i)).expect("checked shape"),
            y: Array2::from_shape_vec((k, u), next(k * u)).expect("checked shape"),
            v: Array2::from_shape_vec((d, i), next(d * i)).expect("checked shape"),
            gamma: Array1::from(next(k)),
        });
    }
    Ok(Chain {
        dims,
        config,
        stream,
        data_fingerprint,
        draws,
    })
}

/// Exports a chain as CSV: one row per draw per parameter block, the block
/// flattened row-major after the `draw,block` prefix.
pub fn export_chain_csv(path: &Path, chain: &Chain) -> Result<()> {
    let mut out = BufWriter::new(std::fs::File::create(path)?);
    writeln!(out, "draw,block,values")?;
    for (d, draw) in chain.draws.iter().enumerate() {
        let blocks: [(&str, Vec<f64>); 6] = [
            ("sigma", draw.sigma.to_vec()),
            ("q", draw.q.iter().cloned().collect()),
            ("x", draw.x.iter().cloned().collect()),
            ("y", draw.y.iter().cloned().collect()),
            ("v", draw.v.iter().cloned().collect()),
            ("gamma", draw.gamma.to_vec()),
        ];
        for (name, values) in blocks {
            write!(out, "{d},{name}")?;
            for v in values {
                write!(out, ",{v}")?;
            }
            writeln!(out)?;
        }
    }
    out.flush()?;
    Ok(())
}

pub fn save_checkpoint(path: &Path, checkpoint: &Checkpoint) -> Result<()> {
    let tmp = path.with_extension("tmp");
    std::fs::write(&tmp, serde_json::to_vec(checkpoint)?)?;
    std::fs::rename(&tmp, path)?;
    Ok(())
}

pub fn load_checkpoint(path: &Path) -> Result<Checkpoint> {
    Ok(serde_json::from_slice(&std::fs::read(path)?)?)
}

/// Runs one chain, streaming retained draws to `chain_path` as they appear
/// and, when `checkpoint_path` is given, writing a resume checkpoint every
/// `config.checkpoint_every` iterations and on failure.
pub fn run_chain_persistent(
    table: &OtuTable,
    covariates: &CovariateMatrix,
    hyper: &Hyperparams,
    config: &SamplerConfig,
    stream: u64,
    chain_path: &Path,
    checkpoint_path: Option<&Path>,
) -> Result<Chain> {
    let mut runner = match checkpoint_path {
        Some(cp) if cp.exists() => {
            let checkpoint = load_checkpoint(cp)?;
            ChainRunner::resume(table, covariates, hyper, config, checkpoint)?
        }
        _ => ChainRunner::new(table, covariates, hyper, config, stream)?,
    };
    let chunk = if config.checkpoint_every == 0 {
        config.n_iterations
    } else {
        config.checkpoint_every
    };
    loop {
        let done = runner.completed_iterations();
        if done >= config.n_iterations {
            break;
        }
        let target = (done + chunk).min(config.n_iterations);
        if let Err(e) = runner.run_until(target) {
            if let Some(cp) = checkpoint_path {
                save_checkpoint(cp, &runner.checkpoint())?;
            }
            return Err(e);
        }
        if let Some(cp) = checkpoint_path {
            if runner.completed_iterations() < config.n_iterations {
                save_checkpoint(cp, &runner.checkpoint())?;
            }
        }
    }
    let chain = runner.finish()?;
    save_chain(chain_path, &chain)?;
    if let Some(cp) = checkpoint_path {
        if cp.exists() {
            std::fs::remove_file(cp)?;
        }
    }
    Ok(chain)
}
