//! Constructive engine for circle diffeomorphisms assembled by fast
//! approximation by conjugation, together with the exact-arithmetic
//! verification suites (norm inequalities, measure identities, derivative
//! cocycles, ratio-set membership) that certify each finite stage.
//!
//! The crate is organized around six concerns:
//!
//! * [`oracle`] — exact rational arithmetic, continued fractions, and the
//!   search for rational approximations witnessing the Liouville property;
//! * [`maps`] — exact-breakpoint piecewise-smooth circle diffeomorphisms
//!   (evaluation, composition, inversion, rotations, cyclic covers);
//! * [`norms`] — the C^r norm/distance apparatus with both empirical
//!   estimates and a priori composition bounds;
//! * [`generators`] — the two-slope base diffeomorphisms for each ergodic
//!   type with their interval combinatorics and exact measure data;
//! * [`construction`] — the inductive driver that schedules rotation
//!   numbers, builds the conjugacy tower, and certifies every stage;
//! * [`ergodic`] — level sets, exact measures, derivative cocycles,
//!   ratio-set membership, and the first-return search.

pub mod config;
pub mod construction;
pub mod ergodic;
pub mod error;
pub mod generators;
pub mod hp;
pub mod jet;
pub mod mag;
pub mod maps;
pub mod norms;
pub mod oracle;
pub mod profile;
pub mod rat;
pub mod trace;

// re-exported once config lands
pub use config::RunConfig;
pub use error::CjError;
pub use rat::Rat;
