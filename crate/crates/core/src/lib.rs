//! Multi-view code representation pipeline.
//!
//! The crate turns small Python-subset programs into several token-level
//! views (plain tokens, linearized syntax trees, linearized control-flow
//! graphs, semantics-preserving transformed variants, and natural-language
//! comments), labels identifier tokens with inferred types, assembles
//! contrastive training batches from the views, and trains a small
//! transformer encoder on the combined contrastive + type-inference +
//! masked-language-modeling objective with L2 regularization.
//!
//! Modules mirror the pipeline stages:
//!
//! - [`frontend`]: lexer, recursive-descent parser, canonical unparser
//! - [`views`]: AST linearization and control-flow-graph construction
//! - [`transform`]: renaming, loop exchange, dead-code insertion
//! - [`interp`]: reference interpreter, the equivalence oracle
//! - [`typing`]: rule-based type labeling and a from-scratch BPE tokenizer
//! - [`pairs`]: model inputs, positive-pair combinations, batching, masking
//! - [`model`]: encoder, loss components, gradient checks, training loop
//! - [`eval`]: retrieval metrics (MRR, MAP@R)
//! - [`corpus`]: record ingestion, view corpus files, manifests
//! - [`synth`]: synthetic paired corpus for smoke-scale training

pub mod config;
pub mod corpus;
pub mod eval;
pub mod frontend;
pub mod interp;
pub mod model;
pub mod pairs;
pub mod synth;
pub mod transform;
pub mod typing;
pub mod views;

pub use config::Config;
pub use corpus::{CorpusManifest, CorpusRecord, ViewCorpus};
pub use frontend::{parse, tokenize, unparse, ParseFailure, SyntaxTree, Token, TokenKind};
pub use interp::{evaluate, Outcome, Status, Value};
pub use pairs::{InputSequence, PairCombination, TrainingBatch, ViewKind, ViewRecord};
pub use typing::{BpeModel, TypeLabel};
