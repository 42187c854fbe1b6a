use histoprog::index::SimilarityIndex;
use histoprog::personalize::{
    personalize, render_report, simulate_cohort, PersonalizeError, PersonalizeOptions, ReportFormat,
    RiskGroup, SimulatedCohort, SimulationSpec,
};
use histoprog::survival::cox_fit;

fn cohort(n: usize, beta: Vec<f64>, seed: u64) -> (SimulatedCohort, SimilarityIndex) {
    let sim = simulate_cohort(&SimulationSpec::new(n, beta, seed)).unwrap();
    let index = SimilarityIndex::build(&sim.features).unwrap();
    (sim, index)
}

#[test]
fn cohort_stays_in_query_cluster_without_self() {
    let (sim, index) = cohort(300, vec![0.8, -0.3, 0.0], 11);
    let opts = PersonalizeOptions::default();
    for query in ["P0001", "P0002", "P0150"] {
        let report = personalize(query, &index, &sim.lineage, &sim.records, &opts).unwrap();
        let q = sim.records.position(query).unwrap();
        assert!(!report.cohort.is_empty());
        for m in &report.cohort {
            assert_ne!(m.patient_id, query);
            let pos = sim.records.position(&m.patient_id).unwrap();
            assert_eq!(sim.cluster_of[pos], sim.cluster_of[q], "{} leaked into {query}'s cohort", m.patient_id);
        }
        assert_eq!(report.query_patches.len(), 6);
    }
}

#[test]
fn weights_are_the_cohort_fit() {
    let (sim, index) = cohort(300, vec![0.8, -0.3, 0.0], 5);
    let opts = PersonalizeOptions::default();
    let report = personalize("P0007", &index, &sim.lineage, &sim.records, &opts).unwrap();
    let ids: Vec<String> = report.cohort.iter().map(|m| m.patient_id.clone()).collect();
    let ds = sim.records.select(Some(&ids), &sim.records.factor_names).unwrap().dataset;
    assert_eq!(ds.n(), report.cohort_size);
    let fit = cox_fit(&ds, 0.0, &opts.cox).unwrap();
    for w in &report.factor_weights {
        let j = fit.names.iter().position(|n| n == &w.name).unwrap();
        assert_eq!(w.weight.to_bits(), fit.beta[j].to_bits());
    }
    assert!(report.factor_weights.windows(2).all(|p| p[0].weight <= p[1].weight));
    let expected = if report.risk_index > report.risk_cut {
        RiskGroup::High
    } else {
        RiskGroup::Low
    };
    assert_eq!(report.risk_group, expected);
    assert!(report.km_low.is_some() && report.km_high.is_some());
    assert_eq!(report.provenance.index_sha256.len(), 64);
}

#[test]
fn reports_are_deterministic() {
    let (sim, index) = cohort(240, vec![0.5, 0.5], 9);
    let opts = PersonalizeOptions {
        lambda: histoprog::config::LambdaChoice::CrossValidated,
        ..Default::default()
    };
    let a = personalize("P0003", &index, &sim.lineage, &sim.records, &opts).unwrap();
    let b = personalize("P0003", &index, &sim.lineage, &sim.records, &opts).unwrap();
    assert_eq!(render_report(&a, ReportFormat::Json), render_report(&b, ReportFormat::Json));
    assert_eq!(render_report(&a, ReportFormat::Markdown), render_report(&b, ReportFormat::Markdown));
    assert!(a.provenance.lambda_selection.is_some());
}

#[test]
fn error_paths() {
    let (mut sim, index) = cohort(60, vec![0.5], 2);
    let opts = PersonalizeOptions::default();
    match personalize("P00O1", &index, &sim.lineage, &sim.records, &opts) {
        Err(PersonalizeError::UnknownPatient { nearest, .. }) => assert_eq!(nearest[0], "P0001"),
        other => panic!("unexpected {other:?}"),
    }
    // 20 patients per cluster is below the default floor of 30.
    let narrow = PersonalizeOptions { k: 100, ..opts.clone() };
    assert!(matches!(
        personalize("P0001", &index, &sim.lineage, &sim.records, &narrow),
        Err(PersonalizeError::CohortTooSmall { found: 19, needed: 30 })
    ));
    sim.records.values[0][0] = None;
    assert_eq!(
        personalize("P0001", &index, &sim.lineage, &sim.records, &opts),
        Err(PersonalizeError::MissingRecords(vec!["P0001".into()]))
    );
}
