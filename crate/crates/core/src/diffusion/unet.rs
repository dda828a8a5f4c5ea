use alloc::format;

use crate::error::{shape_err, Result};
use crate::nn::layers::{Conv1d, CrossAttention, DownBlock, ResidualDilated, UpBlock};
use crate::nn::{Graph, ParamStore, Real, Var};
use crate::rng::Rng;

/// 1D U-Net over `[C_in × n]`. The three decoder blocks are each preceded by
/// cross-attention to the style feature of the same stride and followed by
/// an additive skip from the matching encoder level.
#[derive(Debug, Clone)]
pub struct UNetDenoiser {
    pub channels: [usize; 4],
    pub stem: Conv1d,
    pub encoder: [DownBlock; 3],
    pub bottleneck: ResidualDilated,
    /// Indexed by stride level: `attention[s]` reads style feature `f^{s+1}`.
    pub attention: [CrossAttention; 3],
    /// `decoder[s]` maps level `s+1` back to level `s`.
    pub decoder: [UpBlock; 3],
    pub out: Conv1d,
}

impl UNetDenoiser {
    pub fn new<T: Real>(
        store: &mut ParamStore<T>,
        prefix: &str,
        input: usize,
        channels: [usize; 4],
        style_channels: [usize; 4],
        rng: &mut Rng,
    ) -> Self {
        let c = channels;
        let stem = Conv1d::new(store, &format!("{prefix}.stem"), input, c[0], 1, 1, 1, 0, rng);
        let encoder = [0, 1, 2].map(|i| DownBlock::new(store, &format!("{prefix}.en{}", i + 1), c[i], c[i + 1], rng));
        let bottleneck = ResidualDilated::new(store, &format!("{prefix}.mid"), c[3], 1, rng);
        let attention = [0, 1, 2]
            .map(|i| CrossAttention::new(store, &format!("{prefix}.attn{}", i + 1), c[i + 1], style_channels[i + 1], rng));
        let decoder = [0, 1, 2].map(|i| UpBlock::new(store, &format!("{prefix}.de{}", i + 1), c[i + 1], c[i], rng));
        let out = Conv1d::new(store, &format!("{prefix}.out"), c[0], 3, 1, 1, 1, 0, rng);
        Self { channels, stem, encoder, bottleneck, attention, decoder, out }
    }

    /// `x[C_in × n]` with `n` a multiple of 8 and channel-first style
    /// features → predicted noise `[3 × n]`.
    pub fn forward<T: Real>(&self, g: &mut Graph<'_, T>, x: Var, style: &[Var; 3]) -> Result<Var> {
        let (_, n) = g.value(x).dims2()?;
        if n == 0 || n % 8 != 0 {
            return Err(shape_err(format!("denoiser length {n} is not a positive multiple of 8")));
        }
        let h0 = self.stem.forward(g, x)?;
        let h1 = self.encoder[0].forward(g, h0)?;
        let h2 = self.encoder[1].forward(g, h1)?;
        let h3 = self.encoder[2].forward(g, h2)?;
        let skips = [h0, h1, h2];
        let mut h = self.bottleneck.forward(g, h3)?;
        for s in (0..3).rev() {
            h = self.attention[s].forward(g, h, style[s])?;
            h = self.decoder[s].forward(g, h)?;
            h = g.add(h, skips[s])?;
        }
        self.out.forward(g, h)
    }
}
