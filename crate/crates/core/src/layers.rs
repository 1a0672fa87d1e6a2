//! Layer suites and the plain-text layer file format.
//!
//! One layer per line, comma separated:
//!
//! ```text
//! # name,N,C,Hi,Wi,Hf,Wf,s,pt,pb,pl,pr
//! v1_dw32_112_s1,1,32,112,112,3,3,1,1,1,1,1
//! ```
//!
//! Blank lines and lines starting with `#` are ignored.

use std::collections::HashSet;
use std::fmt::Write as _;

use crate::error::{Error, Result};
use crate::geometry::{ConvGeometry, Padding};

const MOBILENET_V1: &str = include_str!("../data/mobilenet_v1.txt");
const MOBILENET_V2: &str = include_str!("../data/mobilenet_v2.txt");

const FIELDS: usize = 12;

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct LayerConfig {
    pub name: String,
    pub geometry: ConvGeometry,
    pub source: String,
}

/// Distinct 3x3 depthwise layers of MobileNetV1 and MobileNetV2 at batch 1.
pub fn mobilenet_layer_suite() -> Vec<LayerConfig> {
    let mut suite = parse_layer_file(MOBILENET_V1, "mobilenet-v1").expect("bundled v1 suite parses");
    suite.extend(parse_layer_file(MOBILENET_V2, "mobilenet-v2").expect("bundled v2 suite parses"));
    suite
}

/// Parses a layer file. Every layer gets `source` as its label.
pub fn parse_layer_file(text: &str, source: &str) -> Result<Vec<LayerConfig>> {
    let mut layers = Vec::new();
    let mut names = HashSet::new();
    for (idx, raw) in text.lines().enumerate() {
        let line_no = idx + 1;
        let line = raw.trim();
        if line.is_empty() || line.starts_with('#') {
            continue;
        }
        let err = |message: String| Error::Parse { line: line_no, message };
        let fields: Vec<&str> = line.split(',').map(str::trim).collect();
        if fields.len() != FIELDS {
            return Err(err(format!(
                "expected {FIELDS} comma-separated fields, found {}",
                fields.len()
            )));
        }
        let name = fields[0];
        if name.is_empty() {
            return Err(err("empty layer name".into()));
        }
        if !names.insert(name.to_string()) {
            return Err(err(format!("duplicate layer name `{name}`")));
        }
        let mut nums = [0usize; FIELDS - 1];
        const LABELS: [&str; FIELDS - 1] = ["N", "C", "Hi", "Wi", "Hf", "Wf", "s", "pt", "pb", "pl", "pr"];
        for (slot, (field, label)) in nums.iter_mut().zip(fields[1..].iter().zip(LABELS)) {
            *slot = field
                .parse()
                .map_err(|_| err(format!("field {label}: `{field}` is not a non-negative integer")))?;
        }
        let [n, c, hi, wi, hf, wf, s, pt, pb, pl, pr] = nums;
        let geometry = ConvGeometry::new(n, c, (hi, wi), (hf, wf), s, Padding::new(pt, pb, pl, pr))
            .map_err(|e| err(e.to_string()))?;
        layers.push(LayerConfig {
            name: name.to_string(),
            geometry,
            source: source.to_string(),
        });
    }
    Ok(layers)
}

/// Writes layers back in the file format accepted by [`parse_layer_file`].
pub fn format_layer_file(layers: &[LayerConfig]) -> String {
    let mut out = String::from("# name,N,C,Hi,Wi,Hf,Wf,s,pt,pb,pl,pr\n");
    for layer in layers {
        let g = &layer.geometry;
        let p = g.padding();
        let _ = writeln!(
            out,
            "{},{},{},{},{},{},{},{},{},{},{},{}",
            layer.name,
            g.n(),
            g.c(),
            g.hi(),
            g.wi(),
            g.hf(),
            g.wf(),
            g.stride(),
            p.top,
            p.bottom,
            p.left,
            p.right
        );
    }
    out
}
