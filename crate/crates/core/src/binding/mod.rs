//! Binding a model to one machine.
//!
//! A random subset of one layer's weights is encrypted with a one-time key
//! per weight: the key is the PUF's 32-bit response to a fresh random
//! challenge, and the weight's IEEE-754 bit pattern is XORed with it. Only
//! the weight indices and challenges are persisted (see [`HelperData`]), so
//! the keys can be recovered only by querying the same PUF again.
//!
//! Decryption XORs with the response of whatever PUF is present. On the
//! target machine that restores the exact original bits; anywhere else it
//! XORs in a second, unrelated key and the weights stay scrambled.

mod helper;

use std::collections::HashSet;

use rand::Rng;
use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::model::Model;
use crate::puf::{Challenge, PufBackend};
use crate::rng::{derive, seeded};

pub use helper::{
    load_helper, save_helper, HelperData, HelperEntry, HELPER_ENTRY_LEN, HELPER_HEADER_LEN, HELPER_MAGIC,
    HELPER_VERSION,
};

/// Ciphertext of one weight.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct CipherBits(pub u32);

impl CipherBits {
    pub fn to_f32(self) -> f32 {
        f32::from_bits(self.0)
    }
}

/// A set of weights in one layer, as sorted row-major flat indices.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct WeightSelection {
    pub layer_id: usize,
    pub indices: Vec<u32>,
}

#[inline]
pub fn encrypt_weight(weight_bits: u32, key_bits: u32) -> CipherBits {
    CipherBits(weight_bits ^ key_bits)
}

/// Number of weights selected for `pct` percent of `weight_count` (floor).
pub fn selection_count(weight_count: usize, pct: f64) -> Result<usize> {
    if !(0.0..=100.0).contains(&pct) {
        return Err(Error::InvalidArgument(format!("percentage {pct} is outside [0, 100]")));
    }
    let n = (pct * weight_count as f64 / 100.0).floor() as usize;
    Ok(n.min(weight_count))
}

/// First `k` positions of a seeded Fisher-Yates shuffle of `0..weight_count`,
/// in draw order. Prefixes are stable: the first `j` entries for `k` equal
/// the full result for `j`.
pub fn selection_order(weight_count: usize, k: usize, rng_seed: u64) -> Vec<u32> {
    let k = k.min(weight_count);
    let mut pool: Vec<u32> = (0..weight_count as u32).collect();
    let mut rng = seeded(rng_seed);
    for i in 0..k {
        let j = rng.gen_range(i..weight_count);
        pool.swap(i, j);
    }
    pool.truncate(k);
    pool
}

/// Uniform sample of `floor(pct% * weight_count)` indices without
/// replacement, returned sorted.
pub fn choose_weights(weight_count: usize, pct: f64, rng_seed: u64) -> Result<Vec<u32>> {
    if weight_count == 0 {
        return Err(Error::InvalidArgument("cannot select from an empty layer".into()));
    }
    if weight_count > u32::MAX as usize {
        return Err(Error::InvalidArgument(
            "layer has more weights than u32 can index".into(),
        ));
    }
    let k = selection_count(weight_count, pct)?;
    let mut idx = selection_order(weight_count, k, rng_seed);
    idx.sort_unstable();
    Ok(idx)
}

/// `count` distinct challenges from a seeded stream.
pub fn draw_challenges(count: usize, rng_seed: u64) -> Vec<Challenge> {
    let mut rng = seeded(rng_seed);
    let mut seen = HashSet::with_capacity(count);
    let mut out = Vec::with_capacity(count);
    while out.len() < count {
        let c: u64 = rng.gen();
        if seen.insert(c) {
            out.push(Challenge(c));
        }
    }
    out
}

fn layer_id_u16(layer_id: usize) -> Result<u16> {
    u16::try_from(layer_id).map_err(|_| Error::InvalidArgument(format!("layer id {layer_id} exceeds u16")))
}

fn keys<P: PufBackend + ?Sized>(puf: &P, entries: &[HelperEntry]) -> Result<Vec<u32>> {
    entries.par_iter().map(|e| puf.key32(e.challenge)).collect()
}

/// XOR each weight listed in `helper` with its key, in place. This is both
/// the encryption and the decryption step. Indices are checked first so a bad
/// helper leaves the model untouched.
pub fn apply_helper<P: PufBackend + ?Sized>(model: &mut Model, helper: &HelperData, puf: &P) -> Result<()> {
    let layer_id = usize::from(helper.layer_id());
    let count = model
        .layers()
        .get(layer_id)
        .ok_or_else(|| Error::HelperMismatch {
            helper_layer: helper.layer_id(),
            reason: format!("the model has only {} layers", model.layers().len()),
        })?
        .weight_count();
    if let Some(bad) = helper.entries().iter().find(|e| e.flat_index as usize >= count) {
        return Err(Error::HelperMismatch {
            helper_layer: helper.layer_id(),
            reason: format!("index {} is outside the layer's {count} weights", bad.flat_index),
        });
    }
    let keys = keys(puf, helper.entries())?;
    let weights = model.layer_mut(layer_id)?.weights_mut();
    for (e, k) in helper.entries().iter().zip(keys) {
        let w = &mut weights[e.flat_index as usize];
        *w = encrypt_weight(w.to_bits(), k).to_f32();
    }
    Ok(())
}

/// Encrypt an explicit index set with challenges drawn from `challenge_seed`.
pub fn encrypt_selection<P: PufBackend + ?Sized>(
    model: &Model,
    selection: &WeightSelection,
    puf: &P,
    challenge_seed: u64,
) -> Result<(Model, HelperData)> {
    let layer_u16 = layer_id_u16(selection.layer_id)?;
    model.layer(selection.layer_id)?;
    let challenges = draw_challenges(selection.indices.len(), challenge_seed);
    let entries = selection
        .indices
        .iter()
        .zip(challenges)
        .map(|(&flat_index, challenge)| HelperEntry { flat_index, challenge })
        .collect();
    let helper = HelperData::new(layer_u16, entries)?;
    let mut out = model.clone();
    apply_helper(&mut out, &helper, puf)?;
    Ok((out, helper))
}

/// Encrypt `pct` percent of layer `layer_id`'s weights under `puf`.
///
/// `rng_seed` drives both the weight selection and the challenge draws; the
/// two streams are derived from it independently.
pub fn encrypt_model<P: PufBackend + ?Sized>(
    model: &Model,
    layer_id: usize,
    pct: f64,
    puf: &P,
    rng_seed: u64,
) -> Result<(Model, HelperData)> {
    let layer = model.layer(layer_id)?;
    let indices = choose_weights(layer.weight_count(), pct, rng_seed)?;
    encrypt_selection(
        model,
        &WeightSelection { layer_id, indices },
        puf,
        challenge_stream(rng_seed),
    )
}

pub(crate) fn challenge_stream(rng_seed: u64) -> u64 {
    derive(rng_seed, 0xC4A1)
}

/// Recover the weights with the PUF of the machine we are running on. Works
/// purely in memory.
pub fn decrypt_model<P: PufBackend + ?Sized>(model: &Model, helper: &HelperData, puf: &P) -> Result<Model> {
    let mut out = model.clone();
    apply_helper(&mut out, helper, puf)?;
    Ok(out)
}

/// Move a protected model to replacement hardware: decrypt under `old_puf`,
/// then re-encrypt the same weights with fresh challenges under `new_puf`.
pub fn rebind<P: PufBackend + ?Sized, Q: PufBackend + ?Sized>(
    encrypted: &Model,
    helper: &HelperData,
    old_puf: &P,
    new_puf: &Q,
    rng_seed: u64,
) -> Result<(Model, HelperData)> {
    let plain = decrypt_model(encrypted, helper, old_puf)?;
    let selection = WeightSelection {
        layer_id: usize::from(helper.layer_id()),
        indices: helper.indices(),
    };
    encrypt_selection(&plain, &selection, new_puf, challenge_stream(rng_seed))
}
