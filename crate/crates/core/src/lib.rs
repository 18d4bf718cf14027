//! Ontology-guided requirements elicitation.
//!
//! The crate is organised around the two stages of the pipeline and the
//! harness used to evaluate it:
//!
//! * [`ontology`]: the aspect → dimension → slot tree and its JSON form.
//! * [`induction`]: growing that tree from domain requirement texts.
//! * [`interview`]: the question-selection loop that runs over the tree.
//! * [`gym`]: simulated stakeholders, hit judging, IRE and TKQR.
//! * [`backend`] and [`prompts`]: the gateway to text-generation models.

pub mod backend;
pub mod gym;
pub mod induction;
pub mod interview;
pub mod ontology;
pub mod prompts;
pub mod text;

pub use backend::{GenerationError, TextBackend};
pub use ontology::{ExperienceOntology, NodeId, OntologyError, QuestionForm, SlotState};
