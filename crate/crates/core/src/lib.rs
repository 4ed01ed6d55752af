//! Natural adversarial attacks, augmentation transforms and robustness
//! evaluation for named-entity-recognition corpora.
//!
//! The pipeline mirrors how a robustness benchmark is assembled:
//!
//! 1. [`wikidict`] builds an adversarial entity dictionary by linking gold
//!    entities to a knowledge base, reading their fine-grained classes and
//!    expanding each class with out-of-distribution members.
//! 2. [`entity_attack`] swaps gold entities for same-class dictionary entries.
//! 3. [`context_attack`] replaces non-entity content words with low-ranked
//!    masked-LM candidates and keeps the variant a victim scorer likes least.
//! 4. [`eval`] scores victim predictions and breaks down their errors.
//!
//! [`augment`] holds the training-side augmentation transforms.

pub mod augment;
pub mod context_attack;
pub mod corpus;
pub mod entity_attack;
pub mod eval;
pub mod seed;
pub mod wikidict;
