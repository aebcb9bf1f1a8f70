//! Parameter storage for the bank of per-neuron MLPs.
//!
//! Neuron `k` owns the `k`-th slice along axis 0 of every tensor except the
//! readout, where it owns column `k`. The readout has no bias.

use std::io::{Read, Write};

use ndarray::{Array1, Array2, Array3, Array4, ArrayView1, ArrayView2};
use sha2::{Digest, Sha256};

use super::grid::BankShape;
use crate::error::{FtnError, Result};
use crate::numcore::RngStream;

pub const CHECKPOINT_MAGIC: &[u8; 4] = b"FTN1";
pub const TENSOR_COUNT: usize = 7;

/// The seven tensors of a bank, in declaration order. Also used for
/// gradients and Fisher diagonals, which share the parameter layout.
#[derive(Debug, Clone, PartialEq)]
pub struct BankTensors {
    /// `[H, inner, d_in]`
    pub w_in: Array3<f64>,
    /// `[H, inner]`
    pub b_in: Array2<f64>,
    /// `[H, L - 1, inner, inner]`
    pub w_hidden: Array4<f64>,
    /// `[H, L - 1, inner]`
    pub b_hidden: Array3<f64>,
    /// `[H, inner]`
    pub w_head: Array2<f64>,
    /// `[H]`
    pub b_head: Array1<f64>,
    /// `[d_out, H]`
    pub w_out: Array2<f64>,
}

impl BankTensors {
    pub fn zeros(shape: &BankShape) -> Self {
        let h = shape.neurons();
        let (n, l) = (shape.inner, shape.layers - 1);
        Self {
            w_in: Array3::zeros((h, n, shape.d_in)),
            b_in: Array2::zeros((h, n)),
            w_hidden: Array4::zeros((h, l, n, n)),
            b_hidden: Array3::zeros((h, l, n)),
            w_head: Array2::zeros((h, n)),
            b_head: Array1::zeros(h),
            w_out: Array2::zeros((shape.d_out, h)),
        }
    }

    pub fn slices(&self) -> [&[f64]; TENSOR_COUNT] {
        [
            self.w_in.as_slice().expect("standard layout"),
            self.b_in.as_slice().expect("standard layout"),
            self.w_hidden.as_slice().expect("standard layout"),
            self.b_hidden.as_slice().expect("standard layout"),
            self.w_head.as_slice().expect("standard layout"),
            self.b_head.as_slice().expect("standard layout"),
            self.w_out.as_slice().expect("standard layout"),
        ]
    }

    pub fn slices_mut(&mut self) -> [&mut [f64]; TENSOR_COUNT] {
        [
            self.w_in.as_slice_mut().expect("standard layout"),
            self.b_in.as_slice_mut().expect("standard layout"),
            self.w_hidden.as_slice_mut().expect("standard layout"),
            self.b_hidden.as_slice_mut().expect("standard layout"),
            self.w_head.as_slice_mut().expect("standard layout"),
            self.b_head.as_slice_mut().expect("standard layout"),
            self.w_out.as_slice_mut().expect("standard layout"),
        ]
    }

    pub fn lens(&self) -> [usize; TENSOR_COUNT] {
        self.slices().map(|s| s.len())
    }

    pub fn len(&self) -> usize {
        self.lens().iter().sum()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    /// `self += scale * other`, elementwise.
    pub fn add_scaled(&mut self, other: &BankTensors, scale: f64) {
        for (dst, src) in self.slices_mut().into_iter().zip(other.slices()) {
            dst.iter_mut().zip(src).for_each(|(d, &s)| *d += scale * s);
        }
    }

    pub fn scale(&mut self, factor: f64) {
        for dst in self.slices_mut() {
            dst.iter_mut().for_each(|d| *d *= factor);
        }
    }

    /// Flat ranges owned by neuron `k` in the six per-neuron tensors.
    fn neuron_ranges(&self, k: usize) -> [std::ops::Range<usize>; TENSOR_COUNT - 1] {
        let h = self.b_head.len();
        let lens = self.lens();
        std::array::from_fn(|t| {
            let per = lens[t] / h;
            k * per..(k + 1) * per
        })
    }

    /// Every value owned by neuron `k`: its private slices followed by its
    /// readout column.
    pub fn neuron_values(&self, k: usize) -> Vec<f64> {
        let slices = self.slices();
        let mut out: Vec<f64> =
            self.neuron_ranges(k).into_iter().enumerate().flat_map(|(t, r)| slices[t][r].iter().copied()).collect();
        out.extend(self.w_out.column(k).iter().copied());
        out
    }

    /// Apply `f` to every value owned by neuron `k`.
    pub fn for_each_neuron_value_mut(&mut self, k: usize, mut f: impl FnMut(&mut f64)) {
        let ranges = self.neuron_ranges(k);
        {
            let slices = self.slices_mut();
            for (t, slice) in slices.into_iter().take(TENSOR_COUNT - 1).enumerate() {
                slice[ranges[t].clone()].iter_mut().for_each(&mut f);
            }
        }
        self.w_out.column_mut(k).iter_mut().for_each(f);
    }
}

/// Multipliers on the `±sqrt(1 / fan_in)` init bounds: `neuron` for every
/// layer inside a neuron, `readout` for `W_out`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct InitGain {
    pub neuron: f64,
    pub readout: f64,
}

impl Default for InitGain {
    fn default() -> Self {
        Self { neuron: 1.0, readout: 1.0 }
    }
}

impl InitGain {
    pub fn validate(&self) -> Result<()> {
        if !(self.neuron.is_finite() && self.neuron > 0.0) {
            return Err(FtnError::Config(format!("neuron init gain must be positive, got {}", self.neuron)));
        }
        if !(self.readout.is_finite() && self.readout >= 0.0) {
            return Err(FtnError::Config(format!("readout init gain must be nonnegative, got {}", self.readout)));
        }
        Ok(())
    }
}

/// Trainable state of the model.
#[derive(Debug, Clone, PartialEq)]
pub struct NeuronBank {
    shape: BankShape,
    params: BankTensors,
    version: u64,
}

impl NeuronBank {
    /// Uniform `±sqrt(1 / fan_in)` weights per layer, zero biases. Tensors
    /// are drawn in declaration order, row-major.
    pub fn init(shape: BankShape, rng: &mut RngStream) -> Result<Self> {
        Self::init_with_gain(shape, InitGain::default(), rng)
    }

    /// As [`NeuronBank::init`] with the weight bounds scaled by `gain`. A zero
    /// readout gain leaves `W_out` at zero and draws nothing for it.
    pub fn init_with_gain(shape: BankShape, gain: InitGain, rng: &mut RngStream) -> Result<Self> {
        shape.validate()?;
        gain.validate()?;
        let mut params = BankTensors::zeros(&shape);
        let fill = |dst: &mut [f64], fan_in: usize, gain: f64, rng: &mut RngStream| {
            let a = gain * (1.0 / fan_in as f64).sqrt();
            if a > 0.0 {
                dst.copy_from_slice(&rng.uniform(dst.len(), -a, a));
            }
        };
        fill(params.w_in.as_slice_mut().unwrap(), shape.d_in, gain.neuron, rng);
        fill(params.w_hidden.as_slice_mut().unwrap(), shape.inner, gain.neuron, rng);
        fill(params.w_head.as_slice_mut().unwrap(), shape.inner, gain.neuron, rng);
        fill(params.w_out.as_slice_mut().unwrap(), shape.neurons(), gain.readout, rng);
        Ok(Self { shape, params, version: 0 })
    }

    pub fn from_tensors(shape: BankShape, params: BankTensors) -> Result<Self> {
        shape.validate()?;
        if params.lens() != BankTensors::zeros(&shape).lens() {
            return Err(FtnError::Config("tensor sizes do not match bank shape".into()));
        }
        Ok(Self { shape, params, version: 0 })
    }

    pub fn shape(&self) -> &BankShape {
        &self.shape
    }

    pub fn neurons(&self) -> usize {
        self.shape.neurons()
    }

    pub fn params(&self) -> &BankTensors {
        &self.params
    }

    /// Mutable access to the parameters. Invalidates forward caches.
    pub fn params_mut(&mut self) -> &mut BankTensors {
        self.version += 1;
        &mut self.params
    }

    /// Bumped on every mutable access; forward caches remember it.
    pub fn version(&self) -> u64 {
        self.version
    }

    pub fn w_in(&self, k: usize) -> ArrayView2<'_, f64> {
        self.params.w_in.index_axis(ndarray::Axis(0), k)
    }

    pub fn w_out_column(&self, k: usize) -> ArrayView1<'_, f64> {
        self.params.w_out.column(k)
    }

    /// Order-stable SHA-256 over the slices and readout columns of `neurons`.
    pub fn fingerprint(&self, neurons: &[usize]) -> String {
        let mut set = neurons.to_vec();
        set.sort_unstable();
        set.dedup();
        let mut hasher = Sha256::new();
        for k in set {
            hasher.update((k as u64).to_le_bytes());
            for v in self.params.neuron_values(k) {
                hasher.update(v.to_bits().to_le_bytes());
            }
        }
        hex::encode(hasher.finalize())
    }

    /// Little-endian checkpoint: magic, `D, H, L, inner, d_in, d_out` as
    /// u64, then every tensor in declaration order as binary64.
    pub fn write_checkpoint<W: Write>(&self, mut w: W) -> Result<()> {
        w.write_all(CHECKPOINT_MAGIC)?;
        let s = &self.shape;
        for v in [s.side, s.neurons(), s.layers, s.inner, s.d_in, s.d_out] {
            w.write_all(&(v as u64).to_le_bytes())?;
        }
        write_tensors(&self.params, &mut w)?;
        Ok(())
    }

    pub fn read_checkpoint<R: Read>(mut r: R) -> Result<Self> {
        let mut magic = [0u8; 4];
        r.read_exact(&mut magic)?;
        if &magic != CHECKPOINT_MAGIC {
            return Err(FtnError::Data(format!("bad checkpoint magic {magic:?}")));
        }
        let mut header = [0usize; 6];
        for h in header.iter_mut() {
            let mut b = [0u8; 8];
            r.read_exact(&mut b)?;
            *h = u64::from_le_bytes(b) as usize;
        }
        let [side, h, layers, inner, d_in, d_out] = header;
        let shape = BankShape { side, layers, inner, d_in, d_out };
        shape.validate()?;
        if shape.neurons() != h {
            return Err(FtnError::Data(format!("checkpoint H = {h} but D = {side}")));
        }
        let mut params = BankTensors::zeros(&shape);
        read_tensors(&mut params, &mut r)?;
        Ok(Self { shape, params, version: 0 })
    }
}

pub fn write_tensors<W: Write>(t: &BankTensors, w: &mut W) -> Result<()> {
    for slice in t.slices() {
        let mut buf = Vec::with_capacity(slice.len() * 8);
        for v in slice {
            buf.extend_from_slice(&v.to_le_bytes());
        }
        w.write_all(&buf)?;
    }
    Ok(())
}

pub fn read_tensors<R: Read>(t: &mut BankTensors, r: &mut R) -> Result<()> {
    for slice in t.slices_mut() {
        let mut buf = vec![0u8; slice.len() * 8];
        r.read_exact(&mut buf)?;
        for (v, chunk) in slice.iter_mut().zip(buf.chunks_exact(8)) {
            *v = f64::from_le_bytes(chunk.try_into().unwrap());
        }
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    fn shape(side: usize, d_in: usize) -> BankShape {
        BankShape { side, layers: 3, inner: 4, d_in, d_out: 2 }
    }

    #[test]
    fn init_is_deterministic() {
        let a = NeuronBank::init(shape(3, 5), &mut RngStream::new(7, 0)).unwrap();
        let b = NeuronBank::init(shape(3, 5), &mut RngStream::new(7, 0)).unwrap();
        assert_eq!(a, b);
        let c = NeuronBank::init(shape(3, 5), &mut RngStream::new(8, 0)).unwrap();
        assert_ne!(a, c);
    }

    #[test]
    fn tensors_lead_with_neuron_axis() {
        let bank =
            NeuronBank::init(BankShape { side: 2, layers: 2, inner: 3, d_in: 2, d_out: 1 }, &mut RngStream::new(0, 0))
                .unwrap();
        let p = bank.params();
        assert_eq!(p.w_in.dim(), (4, 3, 2));
        assert_eq!(p.b_in.dim(), (4, 3));
        assert_eq!(p.w_hidden.dim(), (4, 1, 3, 3));
        assert_eq!(p.b_hidden.dim(), (4, 1, 3));
        assert_eq!(p.w_head.dim(), (4, 3));
        assert_eq!(p.b_head.dim(), 4);
        assert_eq!(p.w_out.dim(), (1, 4));
    }

    #[test]
    fn input_weight_spread_matches_fan_in() {
        // uniform(-a, a) has standard deviation a / sqrt(3) = sqrt(1 / (3 d_in))
        let d_in = 50;
        let bank =
            NeuronBank::init(BankShape { side: 8, layers: 1, inner: 8, d_in, d_out: 1 }, &mut RngStream::new(1, 0))
                .unwrap();
        let w = bank.params().w_in.as_slice().unwrap();
        let n = w.len() as f64;
        let mean = w.iter().sum::<f64>() / n;
        let sd = (w.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / n).sqrt();
        let expected = (1.0 / (3.0 * d_in as f64)).sqrt();
        assert!((sd - expected).abs() / expected < 0.03, "sd {sd} expected {expected}");
        assert!(bank.params().b_in.iter().all(|&b| b == 0.0));
    }

    #[test]
    fn gain_scales_weights() {
        let s = shape(3, 4);
        let unit = NeuronBank::init(s, &mut RngStream::new(6, 0)).unwrap();
        let gain = InitGain { neuron: 2.5, readout: 0.5 };
        let wide = NeuronBank::init_with_gain(s, gain, &mut RngStream::new(6, 0)).unwrap();
        let (a, b) = (unit.params().slices(), wide.params().slices());
        for t in 0..TENSOR_COUNT {
            let g = if t == TENSOR_COUNT - 1 { 0.5 } else { 2.5 };
            a[t].iter().zip(b[t]).for_each(|(a, b)| assert!((g * a - b).abs() < 1e-15));
        }
    }

    #[test]
    fn zero_readout_gain_leaves_readout_at_zero() {
        let s = shape(3, 4);
        let unit = NeuronBank::init(s, &mut RngStream::new(6, 0)).unwrap();
        let zero =
            NeuronBank::init_with_gain(s, InitGain { neuron: 1.0, readout: 0.0 }, &mut RngStream::new(6, 0)).unwrap();
        assert!(zero.params().w_out.iter().all(|&w| w.to_bits() == 0));
        assert_eq!(unit.params().w_head, zero.params().w_head);
        for neuron in [0.0, -1.0, f64::NAN] {
            assert!(
                NeuronBank::init_with_gain(s, InitGain { neuron, readout: 1.0 }, &mut RngStream::new(6, 0)).is_err()
            );
        }
        assert!(
            NeuronBank::init_with_gain(s, InitGain { neuron: 1.0, readout: -0.1 }, &mut RngStream::new(6, 0)).is_err()
        );
    }

    #[test]
    fn fingerprint_tracks_owned_values_only() {
        let mut bank = NeuronBank::init(shape(3, 4), &mut RngStream::new(2, 0)).unwrap();
        let inside = [1usize, 4];
        let outside: Vec<usize> = (0..9).filter(|k| !inside.contains(k)).collect();
        let fp_in = bank.fingerprint(&inside);
        let fp_out = bank.fingerprint(&outside);
        assert_eq!(fp_in, bank.fingerprint(&[4, 1]));

        // flip the lowest mantissa bit of one in-set weight
        bank.params_mut().for_each_neuron_value_mut(4, |v| *v = f64::from_bits(v.to_bits() ^ 1));
        assert_ne!(bank.fingerprint(&inside), fp_in);
        assert_eq!(bank.fingerprint(&outside), fp_out);
    }

    #[test]
    fn neuron_values_cover_whole_bank() {
        let bank = NeuronBank::init(shape(2, 3), &mut RngStream::new(3, 0)).unwrap();
        let total: usize = (0..4).map(|k| bank.params().neuron_values(k).len()).sum();
        assert_eq!(total, bank.params().len());
    }

    #[test]
    fn checkpoint_round_trip_is_bit_exact() {
        let bank = NeuronBank::init(shape(3, 5), &mut RngStream::new(4, 0)).unwrap();
        let mut buf = Vec::new();
        bank.write_checkpoint(&mut buf).unwrap();
        assert_eq!(&buf[..4], b"FTN1");
        assert_eq!(buf.len(), 4 + 6 * 8 + bank.params().len() * 8);
        let back = NeuronBank::read_checkpoint(&buf[..]).unwrap();
        let mut again = Vec::new();
        back.write_checkpoint(&mut again).unwrap();
        assert_eq!(buf, again);
        assert_eq!(back.params(), bank.params());
    }

    #[test]
    fn checkpoint_rejects_bad_magic() {
        let err = NeuronBank::read_checkpoint(&b"NOPE0000"[..]).unwrap_err();
        assert!(matches!(err, FtnError::Data(_)));
    }
}
