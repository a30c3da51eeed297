//! Randomized invariants, each over a fixed-seed run of at least 100 cases.

mod common;

use common::*;

fn check(result: Result<(), String>) {
    if let Err(e) = result {
        panic!("{e}");
    }
}

#[test]
fn notation_serialize_then_parse_is_identity() {
    check(prop_notation_round_trip(&mut runner(1)));
}

#[test]
fn strata_sum_to_overall_counts() {
    check(prop_strata_sum(&mut runner(2)));
}

#[test]
fn rates_ignore_row_order() {
    check(prop_shuffle_invariance(&mut runner(3)));
}

#[test]
fn coverage_counts_every_included_item_once() {
    check(prop_coverage_conservation(&mut runner(4)));
}

#[test]
fn machine_json_report_round_trips() {
    check(prop_report_round_trip(&mut runner(5)));
}

#[test]
fn compare_is_antisymmetric() {
    check(prop_compare_antisymmetric(&mut runner(6)));
}

#[test]
fn default_rules_keep_source_failures_at_the_generating_organization() {
    check(prop_source_never_dro(&mut runner(7)));
}

#[test]
fn rule_file_order_does_not_matter() {
    check(prop_rule_order_invariance(&mut runner(8)));
}
