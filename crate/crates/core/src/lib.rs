//! Hardware-bound neural network weights.
//!
//! `puflock` encrypts a random subset of a dense layer's weights with keys
//! read from a Physically Unclonable Function, so the model only computes
//! correctly on the machine whose PUF produced the keys. The crate ships a
//! simulated XOR arbiter PUF, a small dense-network runtime with training and
//! file formats, the binding operations, and an experiment harness that
//! measures accuracy loss on other machines.
//!
//! ```
//! use puflock::binding::{decrypt_model, encrypt_model};
//! use puflock::model::{gen_synthetic, train, TrainConfig};
//! use puflock::puf::{PufConfig, XorArbiterPuf};
//!
//! let data = gen_synthetic(1, 3, 4, 20, 3.0, 0.5)?;
//! let model = train(&data, &TrainConfig { hidden_dims: vec![8], epochs: 5, ..Default::default() })?;
//! let target = XorArbiterPuf::new(42, PufConfig::default())?;
//!
//! let (protected, helper) = encrypt_model(&model, 0, 20.0, &target, 7)?;
//! let restored = decrypt_model(&protected, &helper, &target)?;
//! assert!(restored.bit_eq(&model));
//! # Ok::<(), puflock::Error>(())
//! ```

pub mod binding;
pub mod error;
pub mod harness;
pub mod model;
pub mod puf;
pub mod rng;

pub use error::{Error, ErrorKind, Result};
