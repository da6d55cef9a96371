//! Versioned text checkpoints. Floats are stored as hexadecimal `f64` bit
//! patterns so a round trip is bit-exact.
//!
//! ```text
//! ossl-checkpoint 1
//! kind bundle
//! arch input_dim=2 extractor_hidden=64,64 feature_dim=32 classes=3 head_hidden=32
//! frozen_extractor false
//! param extractor.0.weight 2,64
//! 3fb999999999999a bf847ae147ae147b ...
//! ```

use std::fmt::Write as _;
use std::fs;
use std::path::Path;

use crate::error::{Error, Result};
use crate::model::{Architecture, Linear, Mlp, ModelBundle, SourceConfig, StartingPoint};
use crate::numerics::{Scalar, Tensor};

const MAGIC: &str = "ossl-checkpoint 1";

fn hex(v: f64) -> String {
    format!("{:016x}", v.to_bits())
}

fn arch_line(a: &Architecture) -> String {
    let hidden: Vec<String> = a.extractor_hidden.iter().map(usize::to_string).collect();
    format!(
        "arch input_dim={} extractor_hidden={} feature_dim={} classes={} head_hidden={}",
        a.input_dim,
        hidden.join(","),
        a.feature_dim,
        a.classes,
        a.head_hidden
    )
}

fn write_params<T: Scalar>(out: &mut String, bundle: &ModelBundle<T>, include_heads: bool) {
    let n_core = 2 * (bundle.extractor.layers.len() + 1);
    for (i, p) in bundle.params().into_iter().enumerate() {
        if !include_heads && i >= n_core {
            break;
        }
        let shape: Vec<String> = p.tensor.shape().iter().map(usize::to_string).collect();
        let _ = writeln!(out, "param {} {}", p.name, shape.join(","));
        let values: Vec<String> = p.tensor.data().iter().map(|v| hex(v.as_f64())).collect();
        let _ = writeln!(out, "{}", values.join(" "));
    }
}

pub fn encode_bundle<T: Scalar>(bundle: &ModelBundle<T>) -> String {
    let mut out = format!("{MAGIC}\nkind bundle\n{}\n", arch_line(&bundle.arch));
    let _ = writeln!(out, "frozen_extractor {}", bundle.frozen_extractor);
    write_params(&mut out, bundle, true);
    out
}

pub fn encode_starting_point<T: Scalar>(start: &StartingPoint<T>) -> String {
    let c = &start.config;
    let hidden: Vec<String> = c.extractor_hidden.iter().map(usize::to_string).collect();
    let mut out = format!("{MAGIC}\nkind starting-point\n{}\n", arch_line(&start.arch));
    let _ = writeln!(
        out,
        "source epochs={} batch_size={} lr={} momentum={} label_smoothing={} holdout_fraction={} extractor_hidden={} feature_dim={} head_hidden={} seed={}",
        c.epochs,
        c.batch_size,
        hex(c.lr),
        hex(c.momentum),
        hex(c.label_smoothing),
        hex(c.holdout_fraction),
        hidden.join(","),
        c.feature_dim,
        c.head_hidden,
        c.seed
    );
    let _ = writeln!(
        out,
        "meta train_accuracy={} holdout_accuracy={} final_loss={}",
        hex(start.train_accuracy),
        hex(start.holdout_accuracy),
        hex(start.final_loss)
    );
    write_params(&mut out, &start.as_bundle(), false);
    out
}

struct Reader<'a> {
    lines: std::iter::Enumerate<std::str::Lines<'a>>,
    path: &'a str,
    line: usize,
}

impl<'a> Reader<'a> {
    fn err(&self, reason: impl Into<String>) -> Error {
        Error::Parse {
            path: self.path.to_string(),
            line: self.line,
            reason: reason.into(),
        }
    }

    fn next(&mut self) -> Result<&'a str> {
        match self.lines.next() {
            Some((i, l)) => {
                self.line = i + 1;
                Ok(l)
            }
            None => Err(self.err("unexpected end of file")),
        }
    }

    /// Line starting with `keyword`, returning the remainder.
    fn keyword(&mut self, keyword: &str) -> Result<&'a str> {
        let l = self.next()?;
        l.strip_prefix(keyword)
            .and_then(|r| r.strip_prefix(' '))
            .ok_or_else(|| self.err(format!("expected `{keyword}`")))
    }

    fn fields(&mut self, keyword: &str) -> Result<Vec<(&'a str, &'a str)>> {
        let rest = self.keyword(keyword)?;
        rest.split_whitespace()
            .map(|kv| kv.split_once('=').ok_or_else(|| self.err(format!("malformed field `{kv}`"))))
            .collect()
    }

    fn field<'f>(&self, fields: &[(&'f str, &'f str)], name: &str) -> Result<&'f str> {
        fields
            .iter()
            .find(|(k, _)| *k == name)
            .map(|(_, v)| *v)
            .ok_or_else(|| self.err(format!("missing field `{name}`")))
    }

    fn usize_field(&self, fields: &[(&str, &str)], name: &str) -> Result<usize> {
        self.field(fields, name)?.parse().map_err(|_| self.err(format!("bad integer `{name}`")))
    }

    fn hex_field(&self, fields: &[(&str, &str)], name: &str) -> Result<f64> {
        self.parse_hex(self.field(fields, name)?)
    }

    fn list_field(&self, fields: &[(&str, &str)], name: &str) -> Result<Vec<usize>> {
        let v = self.field(fields, name)?;
        if v.is_empty() {
            return Ok(Vec::new());
        }
        v.split(',')
            .map(|s| s.parse().map_err(|_| self.err(format!("bad list `{name}`"))))
            .collect()
    }

    fn parse_hex(&self, s: &str) -> Result<f64> {
        u64::from_str_radix(s, 16)
            .map(f64::from_bits)
            .map_err(|_| self.err(format!("bad float bits `{s}`")))
    }

    fn tensor<T: Scalar>(&mut self, name: &str) -> Result<Tensor<T>> {
        let rest = self.keyword("param")?;
        let (found, shape) = rest.split_once(' ').ok_or_else(|| self.err("malformed param header"))?;
        if found != name {
            return Err(self.err(format!("expected parameter `{name}`, found `{found}`")));
        }
        let shape: Vec<usize> = shape
            .split(',')
            .map(|s| s.parse().map_err(|_| self.err("bad shape")))
            .collect::<Result<_>>()?;
        let values = self.next()?;
        let data = values
            .split_whitespace()
            .map(|s| self.parse_hex(s).map(T::of))
            .collect::<Result<Vec<T>>>()?;
        Tensor::from_vec(&shape, data).map_err(|_| self.err(format!("value count does not match shape of `{name}`")))
    }

    fn arch(&mut self) -> Result<Architecture> {
        let f = self.fields("arch")?;
        let arch = Architecture {
            input_dim: self.usize_field(&f, "input_dim")?,
            extractor_hidden: self.list_field(&f, "extractor_hidden")?,
            feature_dim: self.usize_field(&f, "feature_dim")?,
            classes: self.usize_field(&f, "classes")?,
            head_hidden: self.usize_field(&f, "head_hidden")?,
        };
        arch.validate().map_err(|e| self.err(e.to_string()))?;
        Ok(arch)
    }

    fn linear<T: Scalar>(&mut self, prefix: &str) -> Result<Linear<T>> {
        Ok(Linear {
            weight: self.tensor(&format!("{prefix}.weight"))?,
            bias: self.tensor(&format!("{prefix}.bias"))?,
        })
    }

    fn mlp<T: Scalar>(&mut self, prefix: &str, layers: usize) -> Result<Mlp<T>> {
        let layers = (0..layers)
            .map(|i| self.linear(&format!("{prefix}.{i}")))
            .collect::<Result<Vec<_>>>()?;
        Ok(Mlp { layers })
    }
}

fn reader<'a>(text: &'a str, path: &'a str, kind: &str) -> Result<Reader<'a>> {
    let mut r = Reader {
        lines: text.lines().enumerate(),
        path,
        line: 0,
    };
    if r.next()? != MAGIC {
        return Err(r.err(format!("expected header `{MAGIC}`")));
    }
    let found = r.keyword("kind")?;
    if found != kind {
        return Err(r.err(format!("expected a {kind} checkpoint, found {found}")));
    }
    Ok(r)
}

fn check_shapes<T: Scalar>(bundle: &ModelBundle<T>, r: &Reader<'_>) -> Result<()> {
    let a = &bundle.arch;
    let sizes = a.extractor_sizes();
    let mut expected: Vec<(usize, usize)> = sizes.windows(2).map(|w| (w[0], w[1])).collect();
    expected.push((a.feature_dim, a.classes));
    for _ in 0..2 {
        expected.push((a.feature_dim, a.head_hidden));
        expected.push((a.head_hidden, 1));
    }
    let params = bundle.params();
    for (pair, (fan_in, fan_out)) in params.chunks(2).zip(expected) {
        if pair[0].tensor.shape() != [fan_in, fan_out].as_slice() || pair[1].tensor.shape() != [1, fan_out].as_slice() {
            return Err(r.err(format!("parameter `{}` does not match the architecture", pair[0].name)));
        }
    }
    Ok(())
}

pub fn decode_bundle<T: Scalar>(text: &str, path: &str) -> Result<ModelBundle<T>> {
    let mut r = reader(text, path, "bundle")?;
    let arch = r.arch()?;
    let frozen = match r.keyword("frozen_extractor")? {
        "true" => true,
        "false" => false,
        _ => return Err(r.err("frozen_extractor must be true or false")),
    };
    let bundle = ModelBundle {
        extractor: r.mlp("extractor", arch.extractor_hidden.len() + 1)?,
        classifier: r.linear("classifier")?,
        matcher: r.mlp("matcher", 2)?,
        detector: r.mlp("detector", 2)?,
        frozen_extractor: frozen,
        arch,
    };
    check_shapes(&bundle, &r)?;
    Ok(bundle)
}

pub fn decode_starting_point<T: Scalar>(text: &str, path: &str) -> Result<StartingPoint<T>> {
    let mut r = reader(text, path, "starting-point")?;
    let arch = r.arch()?;
    let f = r.fields("source")?;
    let config = SourceConfig {
        epochs: r.usize_field(&f, "epochs")?,
        batch_size: r.usize_field(&f, "batch_size")?,
        lr: r.hex_field(&f, "lr")?,
        momentum: r.hex_field(&f, "momentum")?,
        label_smoothing: r.hex_field(&f, "label_smoothing")?,
        holdout_fraction: r.hex_field(&f, "holdout_fraction")?,
        extractor_hidden: r.list_field(&f, "extractor_hidden")?,
        feature_dim: r.usize_field(&f, "feature_dim")?,
        head_hidden: r.usize_field(&f, "head_hidden")?,
        seed: r.field(&f, "seed")?.parse().map_err(|_| r.err("bad seed"))?,
    };
    let m = r.fields("meta")?;
    let train_accuracy = r.hex_field(&m, "train_accuracy")?;
    let holdout_accuracy = r.hex_field(&m, "holdout_accuracy")?;
    let final_loss = r.hex_field(&m, "final_loss")?;
    let start = StartingPoint {
        extractor: r.mlp("extractor", arch.extractor_hidden.len() + 1)?,
        classifier: r.linear("classifier")?,
        arch,
        config,
        train_accuracy,
        holdout_accuracy,
        final_loss,
    };
    check_shapes(&start.as_bundle(), &r)?;
    Ok(start)
}

pub fn save_bundle<T: Scalar>(path: &Path, bundle: &ModelBundle<T>) -> Result<()> {
    Ok(fs::write(path, encode_bundle(bundle))?)
}

pub fn load_bundle<T: Scalar>(path: &Path) -> Result<ModelBundle<T>> {
    decode_bundle(&fs::read_to_string(path)?, &path.display().to_string())
}

pub fn save_starting_point<T: Scalar>(path: &Path, start: &StartingPoint<T>) -> Result<()> {
    Ok(fs::write(path, encode_starting_point(start))?)
}

pub fn load_starting_point<T: Scalar>(path: &Path) -> Result<StartingPoint<T>> {
    decode_starting_point(&fs::read_to_string(path)?, &path.display().to_string())
}
