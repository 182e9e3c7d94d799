//! Self-describing model container.
//!
//! ```text
//! CSAE-CHECKPOINT\n
//! <header byte length>\n
//! <header: `key = value` lines>
//! <payload: little-endian f32 tensors, back to back in manifest order>
//! ```
//!
//! Parameters are stored at 32-bit precision and widened exactly on load, so
//! load → save reproduces the file byte for byte.

use std::fmt::Write as _;
use std::path::Path;

use csae_core::nn::{Layer, LayerGroup, LayerKind, LayerSpec, ModelGraph, Params};
use csae_core::signal::Standardizer;
use csae_core::Tensor;

use crate::error::{AppError, AppResult};

pub const MAGIC: &str = "CSAE-CHECKPOINT";
pub const FORMAT_VERSION: u32 = 1;

#[derive(Debug, Clone, PartialEq)]
pub struct Checkpoint {
    pub graph: ModelGraph,
    pub standardizer: Standardizer,
    pub class_names: Vec<String>,
    pub seed: u64,
    pub lambda: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ManifestEntry {
    pub name: String,
    pub shape: Vec<usize>,
    pub offset: usize,
    pub length: usize,
}

fn spec_line(l: &Layer) -> String {
    let s = &l.spec;
    format!(
        "{} {} {} {} {} {} {} {:?} {}",
        l.name,
        l.group.name(),
        s.kind.name(),
        s.in_channels,
        s.out_channels,
        s.kernel_size,
        s.stride,
        s.alpha,
        s.trainable
    )
}

fn parse_spec(line: &str) -> AppResult<(String, LayerGroup, LayerSpec)> {
    let bad = || AppError::Header(format!("bad layer line `{line}`"));
    let f: Vec<&str> = line.split_whitespace().collect();
    if f.len() != 9 {
        return Err(bad());
    }
    let num = |i: usize| f[i].parse::<usize>().map_err(|_| bad());
    let spec = LayerSpec {
        kind: LayerKind::from_name(f[2]).ok_or_else(bad)?,
        in_channels: num(3)?,
        out_channels: num(4)?,
        kernel_size: num(5)?,
        stride: num(6)?,
        alpha: f[7].parse().map_err(|_| bad())?,
        trainable: f[8].parse().map_err(|_| bad())?,
    };
    spec.validate()?;
    Ok((f[0].to_string(), LayerGroup::from_name(f[1]).ok_or_else(bad)?, spec))
}

fn tensors(graph: &ModelGraph) -> Vec<(String, &Tensor)> {
    graph
        .layers
        .iter()
        .filter_map(|l| l.params.as_ref().map(|p| (l, p)))
        .flat_map(|(l, p)| {
            [
                (format!("{}.weight", l.name), &p.weight),
                (format!("{}.bias", l.name), &p.bias),
            ]
        })
        .collect()
}

fn floats(v: &[f64]) -> String {
    v.iter().map(|x| format!("{x:?}")).collect::<Vec<_>>().join(" ")
}

impl Checkpoint {
    pub fn to_bytes(&self) -> Vec<u8> {
        let mut h = String::new();
        let _ = writeln!(h, "format_version = {FORMAT_VERSION}");
        let _ = writeln!(h, "seed = {}", self.seed);
        let _ = writeln!(h, "lambda = {:?}", self.lambda);
        let _ = writeln!(h, "classes = {}", self.class_names.join(","));
        let _ = writeln!(h, "standardizer.mean = {}", floats(&self.standardizer.mean));
        let _ = writeln!(h, "standardizer.std = {}", floats(&self.standardizer.std));
        for (i, l) in self.graph.layers.iter().enumerate() {
            let _ = writeln!(h, "layer.{i} = {}", spec_line(l));
        }
        let mut payload = Vec::new();
        for (i, (name, t)) in tensors(&self.graph).into_iter().enumerate() {
            let shape: Vec<String> = t.shape().iter().map(usize::to_string).collect();
            let _ = writeln!(
                h,
                "tensor.{i} = {name} f32 {} {} {}",
                shape.join("x"),
                payload.len(),
                4 * t.numel()
            );
            for &v in t.data() {
                payload.extend_from_slice(&(v as f32).to_le_bytes());
            }
        }
        let mut out = format!("{MAGIC}\n{}\n", h.len()).into_bytes();
        out.extend_from_slice(h.as_bytes());
        out.extend_from_slice(&payload);
        out
    }

    pub fn from_bytes(bytes: &[u8]) -> AppResult<Self> {
        let rest = bytes
            .strip_prefix(format!("{MAGIC}\n").as_bytes())
            .ok_or_else(|| AppError::Header("missing magic line".into()))?;
        let nl = rest
            .iter()
            .position(|&b| b == b'\n')
            .ok_or_else(|| AppError::Header("missing header length".into()))?;
        let hlen: usize = std::str::from_utf8(&rest[..nl])
            .ok()
            .and_then(|s| s.parse().ok())
            .ok_or_else(|| AppError::Header("unreadable header length".into()))?;
        let rest = &rest[nl + 1..];
        if rest.len() < hlen {
            return Err(AppError::Header(format!(
                "header claims {hlen} bytes, file has {}",
                rest.len()
            )));
        }
        let header = std::str::from_utf8(&rest[..hlen]).map_err(|_| AppError::Header("header is not UTF-8".into()))?;
        let payload = &rest[hlen..];

        let mut kv = Vec::new();
        for line in header.lines() {
            let (k, v) = line
                .split_once(" = ")
                .ok_or_else(|| AppError::Header(format!("bad line `{line}`")))?;
            kv.push((k, v));
        }
        let get = |key: &str| {
            kv.iter()
                .find(|(k, _)| *k == key)
                .map(|(_, v)| *v)
                .ok_or_else(|| AppError::Header(format!("missing `{key}`")))
        };
        let version = get("format_version")?;
        if version.parse::<u32>().ok() != Some(FORMAT_VERSION) {
            return Err(AppError::VersionMismatch {
                found: version.to_string(),
                expected: FORMAT_VERSION,
            });
        }
        let seed = get("seed")?.parse().map_err(|_| AppError::Header("bad seed".into()))?;
        let lambda = get("lambda")?
            .parse()
            .map_err(|_| AppError::Header("bad lambda".into()))?;
        let class_names = get("classes")?
            .split(',')
            .filter(|s| !s.is_empty())
            .map(String::from)
            .collect();
        let pair = |key: &str| -> AppResult<[f64; 2]> {
            let v: Vec<f64> = get(key)?
                .split_whitespace()
                .map(|s| s.parse().map_err(|_| AppError::Header(format!("bad `{key}`"))))
                .collect::<AppResult<_>>()?;
            v.try_into()
                .map_err(|_| AppError::Header(format!("`{key}` needs two values")))
        };
        let standardizer = Standardizer::from_stats(pair("standardizer.mean")?, pair("standardizer.std")?);

        let mut graph = ModelGraph::new();
        for i in 0.. {
            let Ok(line) = get(&format!("layer.{i}")) else { break };
            let (name, group, spec) = parse_spec(line)?;
            graph.layers.push(Layer {
                name,
                group,
                spec,
                params: None,
            });
        }
        let mut manifest = Vec::new();
        for i in 0.. {
            let Ok(line) = get(&format!("tensor.{i}")) else { break };
            manifest.push(parse_manifest(line)?);
        }
        load_params(&mut graph, &manifest, payload)?;
        Ok(Checkpoint {
            graph,
            standardizer,
            class_names,
            seed,
            lambda,
        })
    }

    pub fn save(&self, path: &Path) -> AppResult<()> {
        std::fs::write(path, self.to_bytes()).map_err(|e| AppError::io(path, e))
    }

    pub fn load(path: &Path) -> AppResult<Self> {
        let bytes = std::fs::read(path).map_err(|e| AppError::io(path, e))?;
        Self::from_bytes(&bytes)
    }
}

fn parse_manifest(line: &str) -> AppResult<ManifestEntry> {
    let bad = || AppError::ManifestInconsistency(format!("unreadable entry `{line}`"));
    let f: Vec<&str> = line.split_whitespace().collect();
    if f.len() != 5 || f[1] != "f32" {
        return Err(bad());
    }
    let shape = f[2]
        .split('x')
        .map(|d| d.parse().map_err(|_| bad()))
        .collect::<AppResult<Vec<usize>>>()?;
    Ok(ManifestEntry {
        name: f[0].to_string(),
        shape,
        offset: f[3].parse().map_err(|_| bad())?,
        length: f[4].parse().map_err(|_| bad())?,
    })
}

fn load_params(graph: &mut ModelGraph, manifest: &[ManifestEntry], payload: &[u8]) -> AppResult<()> {
    let inconsistent = |m: String| AppError::ManifestInconsistency(m);
    let mut entries = manifest.iter();
    let mut cursor = 0;
    let mut next = |expected_name: String, expected_shape: Vec<usize>| -> AppResult<Tensor> {
        let e = entries
            .next()
            .ok_or_else(|| inconsistent(format!("no entry for `{expected_name}`")))?;
        if e.name != expected_name || e.shape != expected_shape {
            return Err(inconsistent(format!(
                "entry `{}` {:?} where `{expected_name}` {:?} was expected",
                e.name, e.shape, expected_shape
            )));
        }
        let numel: usize = e.shape.iter().product();
        if e.offset != cursor || e.length != 4 * numel {
            return Err(inconsistent(format!(
                "`{}` at offset {} length {}; expected offset {cursor} length {}",
                e.name,
                e.offset,
                e.length,
                4 * numel
            )));
        }
        cursor += e.length;
        if payload.len() < cursor {
            return Err(AppError::TruncatedPayload {
                expected: cursor,
                actual: payload.len(),
            });
        }
        let data = payload[e.offset..cursor]
            .chunks_exact(4)
            .map(|b| f32::from_le_bytes([b[0], b[1], b[2], b[3]]) as f64)
            .collect();
        Ok(Tensor::new(e.shape.clone(), data)?)
    };
    for layer in &mut graph.layers {
        if let Some((w, b, _)) = layer.spec.param_shapes() {
            let weight = next(format!("{}.weight", layer.name), w)?;
            let bias = next(format!("{}.bias", layer.name), b)?;
            layer.params = Some(Params { weight, bias });
        }
    }
    if let Some(e) = entries.next() {
        return Err(inconsistent(format!("entry `{}` matches no layer", e.name)));
    }
    if payload.len() != cursor {
        return Err(inconsistent(format!(
            "payload holds {} bytes after the last tensor",
            payload.len() - cursor
        )));
    }
    Ok(())
}
