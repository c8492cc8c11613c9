//! Layer graph, seeded initialization and the on-disk weight container.
//!
//! A container is a directory holding `manifest.json` and a flat payload of
//! little-endian `f32` values. Each manifest entry names a layer, its
//! `[out, in, kh, kw]` shape and the byte offset of its data; a layer occupies
//! `out·in·kh·kw` weights (row-major) followed by `out` biases.

use std::collections::BTreeMap;
use std::fs;
use std::path::Path;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::error::{param_err, Error, Result};
use crate::tensor::ConvKernel;

pub const MANIFEST_FILE: &str = "manifest.json";
pub const PAYLOAD_FILE: &str = "weights.bin";
pub const FORMAT_NAME: &str = "jdpnet-weights";
pub const FORMAT_VERSION: u32 = 1;

/// Width used by the reference network.
pub const DEFAULT_CHANNEL_WIDTH: usize = 64;

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct LayerSpec {
    pub name: String,
    /// `[out, in, kh, kw]`
    pub shape: [usize; 4],
}

impl LayerSpec {
    fn new(name: &str, shape: [usize; 4]) -> Self {
        Self {
            name: name.to_string(),
            shape,
        }
    }

    pub fn fan_in(&self) -> usize {
        self.shape[1] * self.shape[2] * self.shape[3]
    }

    /// Number of `f32` values (weights then biases) in the payload.
    pub fn value_count(&self) -> usize {
        self.shape.iter().product::<usize>() + self.shape[0]
    }
}

/// Hidden width of the channel-attention bottleneck for `channels` inputs.
pub fn ese_hidden(channels: usize) -> usize {
    (channels / 4).max(1)
}

/// Every layer of the network for base width `c`, in payload order.
pub fn architecture(c: usize) -> Vec<LayerSpec> {
    let c2 = 2 * c;
    let mut v = vec![
        LayerSpec::new("jfe.enc1.conv1", [c, 3, 3, 3]),
        LayerSpec::new("jfe.enc1.conv2", [c, c, 3, 3]),
        LayerSpec::new("jfe.enc2.conv1", [c, c, 3, 3]),
        LayerSpec::new("jfe.enc2.conv2", [c, c, 3, 3]),
        LayerSpec::new("jfe.enc3.conv1", [c, c, 3, 3]),
        LayerSpec::new("jfe.enc3.conv2", [c, c, 3, 3]),
        LayerSpec::new("jfe.bottleneck.conv1", [c, c, 3, 3]),
        LayerSpec::new("jfe.bottleneck.conv2", [c, c, 3, 3]),
        LayerSpec::new("jfe.bottleneck.ese.fc1", [ese_hidden(c), c, 1, 1]),
        LayerSpec::new("jfe.bottleneck.ese.fc2", [c, ese_hidden(c), 1, 1]),
        LayerSpec::new("jfe.dec3.conv", [c, c2, 3, 3]),
        LayerSpec::new("jfe.dec2.conv", [c, c2, 3, 3]),
        LayerSpec::new("jfe.dec1.conv", [c2, c2, 3, 3]),
    ];
    for name in ["mean_loc", "mean_scale", "std_loc", "std_scale"] {
        v.push(LayerSpec::new(&format!("pb.pg.{name}"), [c2, c2, 1, 1]));
    }
    v.extend([
        LayerSpec::new("pb.res.conv1", [c2, c2, 3, 3]),
        LayerSpec::new("pb.res.conv2", [c2, c2, 3, 3]),
        LayerSpec::new("pb.res.ese.fc1", [ese_hidden(c2), c2, 1, 1]),
        LayerSpec::new("pb.res.ese.fc2", [c2, ese_hidden(c2), 1, 1]),
        LayerSpec::new("fpp.out", [3, c2, 3, 3]),
    ]);
    v
}

#[derive(Debug, Clone, PartialEq)]
pub struct NetworkWeights {
    channel_width: usize,
    layers: BTreeMap<String, ConvKernel>,
}

impl NetworkWeights {
    /// Validates `layers` against the architecture graph for `channel_width`.
    pub fn new(channel_width: usize, layers: BTreeMap<String, ConvKernel>) -> Result<Self> {
        let w = Self {
            channel_width,
            layers,
        };
        w.audit()?;
        Ok(w)
    }

    pub fn channel_width(&self) -> usize {
        self.channel_width
    }

    pub fn layers(&self) -> &BTreeMap<String, ConvKernel> {
        &self.layers
    }

    pub fn layer(&self, name: &str) -> Result<&ConvKernel> {
        self.layers.get(name).ok_or_else(|| Error::WeightAudit {
            layer: name.to_string(),
            reason: "missing".into(),
        })
    }

    /// Mutable access for tests and experiments; shapes stay fixed.
    pub fn layer_mut(&mut self, name: &str) -> Result<&mut ConvKernel> {
        self.layers.get_mut(name).ok_or_else(|| Error::WeightAudit {
            layer: name.to_string(),
            reason: "missing".into(),
        })
    }

    /// Checks that every required layer is present with its exact shape and
    /// that no unknown layers exist.
    pub fn audit(&self) -> Result<()> {
        if self.channel_width == 0 {
            return param_err("channel_width must be at least 1");
        }
        let arch = architecture(self.channel_width);
        for spec in &arch {
            let k = self.layer(&spec.name)?;
            if k.shape() != spec.shape {
                return Err(Error::WeightAudit {
                    layer: spec.name.clone(),
                    reason: format!("shape {:?}, expected {:?}", k.shape(), spec.shape),
                });
            }
        }
        if let Some(extra) = self
            .layers
            .keys()
            .find(|k| !arch.iter().any(|s| &s.name == *k))
        {
            return Err(Error::WeightAudit {
                layer: extra.clone(),
                reason: "unknown layer".into(),
            });
        }
        Ok(())
    }

    /// Writes `manifest.json` and the payload into `dir` (created if needed).
    pub fn save(&self, dir: &Path) -> Result<()> {
        fs::create_dir_all(dir)?;
        let mut payload = Vec::new();
        let mut entries = Vec::new();
        for spec in architecture(self.channel_width) {
            let k = self.layer(&spec.name)?;
            entries.push(ManifestEntry {
                name: spec.name.clone(),
                shape: spec.shape,
                offset: payload.len() as u64,
            });
            for v in k.weights().iter().chain(k.bias()) {
                payload.extend_from_slice(&(*v as f32).to_le_bytes());
            }
        }
        let manifest = Manifest {
            format: FORMAT_NAME.into(),
            version: FORMAT_VERSION,
            channel_width: self.channel_width,
            payload: PAYLOAD_FILE.into(),
            layers: entries,
        };
        fs::write(dir.join(PAYLOAD_FILE), &payload)?;
        let mut json = serde_json::to_string_pretty(&manifest)?;
        json.push('\n');
        fs::write(dir.join(MANIFEST_FILE), json)?;
        Ok(())
    }

    pub fn load(dir: &Path) -> Result<Self> {
        Ok(inspect_container(dir)?.weights)
    }
}

/// He-style initialization: weights drawn from `N(0, 2/fan_in)` with a
/// ChaCha8 stream seeded by `seed`, rounded to `f32`; biases zero.
pub fn init_weights(seed: u64, channel_width: usize) -> Result<NetworkWeights> {
    if channel_width == 0 {
        return param_err("channel_width must be at least 1");
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut layers = BTreeMap::new();
    for spec in architecture(channel_width) {
        let std = (2.0 / spec.fan_in() as f64).sqrt();
        let normal = Normal::new(0.0, std).map_err(|e| Error::Parameter(e.to_string()))?;
        let count: usize = spec.shape.iter().product();
        let weights = (0..count)
            .map(|_| normal.sample(&mut rng) as f32 as f64)
            .collect();
        let [o, i, kh, kw] = spec.shape;
        layers.insert(
            spec.name.clone(),
            ConvKernel::new(o, i, kh, kw, weights, vec![0.0; o])?,
        );
    }
    NetworkWeights::new(channel_width, layers)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ManifestEntry {
    pub name: String,
    pub shape: [usize; 4],
    pub offset: u64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Manifest {
    pub format: String,
    pub version: u32,
    pub channel_width: usize,
    pub payload: String,
    pub layers: Vec<ManifestEntry>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct LayerInfo {
    pub name: String,
    pub shape: [usize; 4],
    pub offset: u64,
    /// Hex SHA-256 of the layer's payload bytes.
    pub sha256: String,
}

#[derive(Debug, Clone)]
pub struct ContainerReport {
    pub layers: Vec<LayerInfo>,
    /// Hex SHA-256 of the whole payload file.
    pub payload_sha256: String,
    pub weights: NetworkWeights,
}

fn hex_digest(bytes: &[u8]) -> String {
    Sha256::digest(bytes)
        .iter()
        .map(|b| format!("{b:02x}"))
        .collect()
}

fn audit_err<T>(layer: &str, reason: impl Into<String>) -> Result<T> {
    Err(Error::WeightAudit {
        layer: layer.to_string(),
        reason: reason.into(),
    })
}

/// Reads and fully validates a container, returning per-layer checksums and
/// the decoded weights.
pub fn inspect_container(dir: &Path) -> Result<ContainerReport> {
    let manifest: Manifest = serde_json::from_slice(&fs::read(dir.join(MANIFEST_FILE))?)?;
    if manifest.format != FORMAT_NAME || manifest.version != FORMAT_VERSION {
        return audit_err(
            "<manifest>",
            format!(
                "unsupported format {} v{}",
                manifest.format, manifest.version
            ),
        );
    }
    if manifest.channel_width == 0 {
        return audit_err("<manifest>", "channel_width must be at least 1");
    }
    let payload = fs::read(dir.join(&manifest.payload))?;
    let arch = architecture(manifest.channel_width);

    let mut layers = BTreeMap::new();
    let mut infos = Vec::with_capacity(manifest.layers.len());
    for entry in &manifest.layers {
        let Some(spec) = arch.iter().find(|s| s.name == entry.name) else {
            return audit_err(&entry.name, "unknown layer");
        };
        if entry.shape != spec.shape {
            return audit_err(
                &entry.name,
                format!("shape {:?}, expected {:?}", entry.shape, spec.shape),
            );
        }
        if layers.contains_key(&entry.name) {
            return audit_err(&entry.name, "listed twice");
        }
        let start = entry.offset as usize;
        let end = start + spec.value_count() * 4;
        if end > payload.len() {
            return audit_err(
                &entry.name,
                format!(
                    "bytes {start}..{end} out of bounds for a {}-byte payload",
                    payload.len()
                ),
            );
        }
        let bytes = &payload[start..end];
        let values: Vec<f64> = bytes
            .chunks_exact(4)
            .map(|b| f32::from_le_bytes([b[0], b[1], b[2], b[3]]) as f64)
            .collect();
        if values.iter().any(|v| !v.is_finite()) {
            return audit_err(&entry.name, "non-finite value");
        }
        let [o, i, kh, kw] = spec.shape;
        let n = o * i * kh * kw;
        let kernel = ConvKernel::new(o, i, kh, kw, values[..n].to_vec(), values[n..].to_vec())?;
        layers.insert(entry.name.clone(), kernel);
        infos.push(LayerInfo {
            name: entry.name.clone(),
            shape: entry.shape,
            offset: entry.offset,
            sha256: hex_digest(bytes),
        });
    }
    if let Some(missing) = arch.iter().find(|s| !layers.contains_key(&s.name)) {
        return audit_err(&missing.name, "missing from manifest");
    }
    let weights = NetworkWeights::new(manifest.channel_width, layers)?;
    Ok(ContainerReport {
        layers: infos,
        payload_sha256: hex_digest(&payload),
        weights,
    })
}
