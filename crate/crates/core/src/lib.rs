//! Semi-supervised anomaly detection with variational autoencoders.
//!
//! Two training objectives share one encoder between normal data and a small
//! pool of labelled anomalies:
//!
//! * **max-min likelihood** (`mml`): maximise the ELBO of normal rows while
//!   minimising an exponentiated χ upper bound (CUBO) of the anomalies, with
//!   the decoder held fixed for the anomaly term;
//! * **dual prior** (`dp`): normal rows use the prior `N(0, I)`, anomalies use
//!   `N(α·1, I)`, again with a frozen decoder on the anomaly term.
//!
//! Rows are scored by their ELBO under the normal prior, averaged across an
//! ensemble of independently seeded models.

pub mod cli;
pub mod datakit;
pub mod gradcore;
pub mod models;
pub mod netblocks;
pub mod rng;
pub mod trainer;
pub mod vbounds;
