mod common;

#[test]
fn edit_distance_matches_recursion_exhaustively() {
    assert_eq!(common::all_strings(6).len(), 1093);
    assert_eq!(common::check_edit_distance_exhaustive(), Ok(1093 * 1093));
}

#[test]
fn hardness_table() {
    common::check_hardness_table().unwrap();
}
