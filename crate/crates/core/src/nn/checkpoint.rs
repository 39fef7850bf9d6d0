//! `NET1` checkpoint files.
//!
//! Layout (little-endian): magic `NET1`, `u32` version, config block
//! (`u32` input channels, `u32` branch count, `u32` conv count + that many
//! `u32` reference widths, `f64` width factor, `u32` FC count + widths,
//! `u32` classes, `u32` input height, `u32` input width, `u64` seed), then
//! every parameter and BN running statistic as `f32` in declaration order:
//! per conv block `weight, bias, gamma, beta, running_mean, running_var`,
//! the same per FC block, then the head `weight, bias`.

use std::io::{Read, Write};
use std::path::Path;

use super::{build_network, Network, NetworkConfig, Scalar};
use crate::error::{Error, Result};

const MAGIC: [u8; 4] = *b"NET1";
const VERSION: u32 = 1;

fn state_slices<T: Scalar>(net: &Network<T>) -> Vec<&[T]> {
    let mut out: Vec<&[T]> = Vec::new();
    for stack in &net.branches {
        for b in &stack.blocks {
            out.extend([
                &b.conv.weight.data[..],
                &b.conv.bias.data[..],
                &b.bn.gamma.data[..],
                &b.bn.beta.data[..],
                &b.bn.running_mean[..],
                &b.bn.running_var[..],
            ]);
        }
    }
    for b in &net.fc {
        out.extend([
            &b.linear.weight.data[..],
            &b.linear.bias.data[..],
            &b.bn.gamma.data[..],
            &b.bn.beta.data[..],
            &b.bn.running_mean[..],
            &b.bn.running_var[..],
        ]);
    }
    out.extend([&net.head.weight.data[..], &net.head.bias.data[..]]);
    out
}

fn state_slices_mut<T: Scalar>(net: &mut Network<T>) -> Vec<&mut [T]> {
    let mut out: Vec<&mut [T]> = Vec::new();
    for stack in &mut net.branches {
        for b in &mut stack.blocks {
            out.push(&mut b.conv.weight.data);
            out.push(&mut b.conv.bias.data);
            out.push(&mut b.bn.gamma.data);
            out.push(&mut b.bn.beta.data);
            out.push(&mut b.bn.running_mean);
            out.push(&mut b.bn.running_var);
        }
    }
    for b in &mut net.fc {
        out.push(&mut b.linear.weight.data);
        out.push(&mut b.linear.bias.data);
        out.push(&mut b.bn.gamma.data);
        out.push(&mut b.bn.beta.data);
        out.push(&mut b.bn.running_mean);
        out.push(&mut b.bn.running_var);
    }
    out.push(&mut net.head.weight.data);
    out.push(&mut net.head.bias.data);
    out
}

fn put_u32(buf: &mut Vec<u8>, v: usize) {
    buf.extend_from_slice(&(v as u32).to_le_bytes());
}

pub fn encode_checkpoint<T: Scalar>(net: &Network<T>) -> Vec<u8> {
    let cfg = &net.config;
    let mut buf = Vec::new();
    buf.extend_from_slice(&MAGIC);
    put_u32(&mut buf, VERSION as usize);
    put_u32(&mut buf, cfg.n_input_channels);
    put_u32(&mut buf, cfg.branch_count);
    put_u32(&mut buf, cfg.conv_widths.len());
    for &w in &cfg.conv_widths {
        put_u32(&mut buf, w);
    }
    buf.extend_from_slice(&cfg.width_factor.to_le_bytes());
    put_u32(&mut buf, cfg.fc_widths.len());
    for &w in &cfg.fc_widths {
        put_u32(&mut buf, w);
    }
    put_u32(&mut buf, cfg.n_classes);
    put_u32(&mut buf, cfg.input_hw.0);
    put_u32(&mut buf, cfg.input_hw.1);
    buf.extend_from_slice(&cfg.seed.to_le_bytes());
    for slice in state_slices(net) {
        for v in slice {
            buf.extend_from_slice(&(v.f64() as f32).to_le_bytes());
        }
    }
    buf
}

struct Cursor<'a> {
    buf: &'a [u8],
    pos: usize,
}

impl<'a> Cursor<'a> {
    fn take(&mut self, n: usize) -> Result<&'a [u8]> {
        if self.pos + n > self.buf.len() {
            return Err(Error::Truncated {
                needed: self.pos + n,
                found: self.buf.len(),
            });
        }
        let s = &self.buf[self.pos..self.pos + n];
        self.pos += n;
        Ok(s)
    }

    fn u32(&mut self) -> Result<usize> {
        Ok(u32::from_le_bytes(self.take(4)?.try_into().unwrap()) as usize)
    }

    fn u64(&mut self) -> Result<u64> {
        Ok(u64::from_le_bytes(self.take(8)?.try_into().unwrap()))
    }

    fn f64(&mut self) -> Result<f64> {
        Ok(f64::from_le_bytes(self.take(8)?.try_into().unwrap()))
    }
}

pub fn decode_checkpoint<T: Scalar>(buf: &[u8]) -> Result<Network<T>> {
    let mut cur = Cursor { buf, pos: 0 };
    let magic: [u8; 4] = cur.take(4)?.try_into().unwrap();
    if magic != MAGIC {
        return Err(Error::BadMagic {
            expected: MAGIC,
            found: magic,
        });
    }
    let version = cur.u32()?;
    if version != VERSION as usize {
        return Err(Error::InvalidConfig(format!("unsupported checkpoint version {version}")));
    }
    let n_input_channels = cur.u32()?;
    let branch_count = cur.u32()?;
    let n_conv = cur.u32()?;
    if n_conv != 5 {
        return Err(Error::InvalidConfig(format!("expected 5 conv widths, found {n_conv}")));
    }
    let mut conv_widths = [0usize; 5];
    for w in &mut conv_widths {
        *w = cur.u32()?;
    }
    let width_factor = cur.f64()?;
    let n_fc = cur.u32()?;
    if n_fc > 64 {
        return Err(Error::DimensionOverflow(format!("{n_fc} fully connected layers")));
    }
    let fc_widths = (0..n_fc).map(|_| cur.u32()).collect::<Result<Vec<_>>>()?;
    let n_classes = cur.u32()?;
    let input_hw = (cur.u32()?, cur.u32()?);
    let seed = cur.u64()?;
    let cfg = NetworkConfig {
        n_input_channels,
        branch_count,
        conv_widths,
        width_factor,
        fc_widths,
        n_classes,
        input_hw,
        seed,
    };
    let mut net = build_network::<T>(&cfg)?;
    let total: usize = state_slices(&net).iter().map(|s| s.len()).sum();
    let needed = cur.pos + 4 * total;
    if buf.len() != needed {
        return Err(if buf.len() < needed {
            Error::Truncated {
                needed,
                found: buf.len(),
            }
        } else {
            Error::InvalidConfig(format!(
                "{} trailing bytes after checkpoint payload",
                buf.len() - needed
            ))
        });
    }
    for slice in state_slices_mut(&mut net) {
        for v in slice.iter_mut() {
            *v = T::of(f32::from_le_bytes(cur.take(4)?.try_into().unwrap()) as f64);
        }
    }
    Ok(net)
}

pub fn save_checkpoint<T: Scalar>(net: &Network<T>, path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    std::fs::File::create(path)
        .and_then(|mut f| f.write_all(&encode_checkpoint(net)))
        .map_err(|e| Error::io(path, e))
}

pub fn load_checkpoint<T: Scalar>(path: impl AsRef<Path>) -> Result<Network<T>> {
    let path = path.as_ref();
    let mut buf = Vec::new();
    std::fs::File::open(path)
        .and_then(|mut f| f.read_to_end(&mut buf))
        .map_err(|e| Error::io(path, e))?;
    decode_checkpoint(&buf)
}
