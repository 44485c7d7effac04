//! Synthetic household-individual inventories and record-level sanity rules.

pub mod inventory;
pub mod sanity;

pub use inventory::{generate_inventory, GenerateOptions, Provenance, SyntheticInventory};
pub use sanity::{
    builtin_rules, load_rules, parse_rules, sanity_check, MemberRule, RuleSummary, SanityReport, SanityRule,
    Violation, ViolationKind,
};
