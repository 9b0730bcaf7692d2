mod common;

use icl_data::evalgen::TemplateRegistry;

#[test]
fn builtin_templates_match_goldens() {
    let registry = TemplateRegistry::default();
    let records = common::golden_records();
    assert_eq!(records.len(), 5);
    for record in &records {
        let expected = std::fs::read_to_string(common::golden_file_for(record)).unwrap();
        assert_eq!(
            common::golden_text(record, &registry),
            expected,
            "{}",
            record.task_id
        );
    }
}

#[test]
fn candidates_differ_only_in_scored_region() {
    let registry = TemplateRegistry::default();
    for record in common::golden_records() {
        let cands = icl_data::evalgen::render_record(&record, &registry).unwrap();
        let prefix = |c: &icl_data::evalgen::RenderedCandidate| {
            c.text.chars().take(c.score_span.0).collect::<String>()
        };
        for c in &cands {
            assert_eq!(prefix(c), prefix(&cands[0]));
            assert_eq!(c.score_span.1, c.text.chars().count());
        }
    }
}
