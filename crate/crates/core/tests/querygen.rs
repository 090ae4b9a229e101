mod common;

use shiftminer::querygen::{
    bind_queries, completion_path, extract_query_objects, generate_queries, generate_queries_detailed,
    merge_catalog, parse_catalog, placeholders, query_template, render_prompt, round_prompt, discovery_template,
    GenerateConfig, QuerygenError, ReplayBackend, query_bindings,
};
use shiftminer::series::Source;
use shiftminer::sources::{QueryPayload, SourceQuery};

use common::{fig4_text, fred_completion, ScriptedBackend};

fn d(s: &str) -> chrono::NaiveDate {
    chrono::NaiveDate::parse_from_str(s, "%Y-%m-%d").unwrap()
}

#[test]
fn example_completion_yields_both_queries() {
    let raw = extract_query_objects(&fig4_text()).unwrap();
    let out = bind_queries(raw, None);
    assert!(out.rejected.is_empty(), "{:?}", out.rejected);
    assert_eq!(out.accepted.len(), 2);
    match &out.accepted[0].payload {
        QueryPayload::Fred(q) => {
            assert_eq!(q.series_id, "UNRATE");
            assert_eq!((q.start_date, q.end_date), (d("2007-01-01"), d("2013-01-01")));
        }
        other => panic!("{other:?}"),
    }
    match &out.accepted[1].payload {
        QueryPayload::Eia(q) => {
            assert_eq!(q.api_route, "electricity/rto/daily-region-data/data");
            let want = [
                ("frequency", "daily"),
                ("data[0]", "value"),
                ("facets[respondent][]", "PJM"),
                ("sort[0][column]", "period"),
                ("sort[0][direction]", "desc"),
                ("offset", "0"),
                ("length", "5000"),
                ("start", "2017-09-01"),
                ("end", "2018-02-28"),
            ];
            let got: Vec<(&str, &str)> = q.params.iter().map(|(k, v)| (k.as_str(), v.as_str())).collect();
            assert_eq!(got, want);
        }
        other => panic!("{other:?}"),
    }
}

#[test]
fn bundled_completion_gives_fifty_queries_in_one_round() {
    let backend = ReplayBackend::new(common::workspace_root().join("fixtures"));
    let g = generate_queries_detailed(Source::Fred, &backend, GenerateConfig::default()).unwrap();
    assert_eq!(g.queries.len(), 50);
    assert_eq!(g.rounds, 1);
    assert!(g.queries.iter().all(|q| q.source() == Source::Fred));
}

#[test]
fn second_round_tops_up_to_the_requested_count() {
    let valid = fred_completion(0, 30);
    let mut bad_items = String::new();
    for bad in [
        "{'series_id': 'lower', 'start_date': '2001-01-01', 'end_date': '2002-01-01'}",
        "{'series_id': 'X1', 'start_date': '2005-01-01', 'end_date': '2002-01-01'}",
        "{'series_id': 'X2', 'start_date': '2001-13-01', 'end_date': '2002-01-01'}",
        "{'start_date': '2001-01-01', 'end_date': '2002-01-01'}",
        "{'series_id': 'X3', 'start_date': '2001-01-01', 'end_date': '2002-01-01', 'source': 'EIA'}",
    ] {
        bad_items.push_str(&format!("    {bad},\n"));
    }
    let first = valid.replace("\n]\n```", &format!("\n{bad_items}]\n```"));
    let backend = ScriptedBackend::new(vec![Ok(first.clone()), Ok(fred_completion(30, 25))]);
    let g = generate_queries_detailed(Source::Fred, &backend, GenerateConfig::default()).unwrap();
    assert_eq!(g.rounds, 2);
    assert_eq!(g.rejected, 5);
    assert_eq!(g.queries.len(), 50);
    assert_eq!(g.queries.iter().filter(|q| q.label().contains("ID5")).count(), 1);

    let prompts = backend.prompts.lock().unwrap();
    assert!(prompts[1].starts_with(&prompts[0]));
    assert!(prompts[1].contains(&first));
    assert!(prompts[1].ends_with("Provide 20 additional queries for the FRED dataset in the same format."));
}

#[test]
fn backend_failure_propagates() {
    let backend = ScriptedBackend::new(vec![Err(QuerygenError::BackendFailure("down".into()))]);
    assert_eq!(
        generate_queries(Source::Fred, &backend, GenerateConfig::default()),
        Err(QuerygenError::BackendFailure("down".into()))
    );
    let empty = tempfile::tempdir().unwrap();
    let r = generate_queries(Source::Fred, &ReplayBackend::new(empty.path()), GenerateConfig::default());
    assert!(matches!(r, Err(QuerygenError::BackendFailure(_))));
}

#[test]
fn prose_only_completions_end_with_no_queries() {
    let backend = ScriptedBackend::new(vec![Ok("Sorry, nothing.".into()), Ok("Still nothing.".into()), Ok("No.".into())]);
    let g = generate_queries_detailed(Source::Fred, &backend, GenerateConfig::default());
    assert_eq!(g, Err(QuerygenError::NoQueriesFound));
    assert_eq!(backend.prompts.lock().unwrap().len(), 3);
}

#[test]
fn prompt_key_follows_the_rendered_template() {
    let prompt = round_prompt(None, Source::Fred, 50, 50).unwrap();
    assert!(completion_path(&common::workspace_root().join("fixtures"), &prompt).exists());
    assert!(prompt.contains("FRED"));
    assert!(placeholders(&prompt).is_empty());
    assert!(placeholders(&render_prompt(&discovery_template(), &Default::default()).unwrap()).is_empty());
}

#[test]
fn missing_binding_is_reported() {
    let mut b = query_bindings(Source::Fred, 5).unwrap();
    b.remove("source_name");
    assert!(matches!(render_prompt(&query_template(), &b), Err(QuerygenError::MissingBinding(k)) if k == "source_name"));
}

#[test]
fn mutated_completions_never_accept_invalid_queries() {
    let t = common::query_fuzz::run(600, 5);
    assert!(t.violations.is_empty(), "{:?}", &t.violations[..t.violations.len().min(3)]);
    assert!(t.accepted > 0 && t.rejected + t.no_queries > 0, "{t:?}");
}

#[test]
fn duplicates_collapse_across_rounds() {
    let backend = ScriptedBackend::new(vec![Ok(fred_completion(0, 10)), Ok(fred_completion(5, 10))]);
    let g = generate_queries_detailed(
        Source::Fred,
        &backend,
        GenerateConfig { query_count: 15, max_rounds: 2 },
    )
    .unwrap();
    assert_eq!(g.queries.len(), 15);
    let q = SourceQuery::fred("ID14", d("2001-01-01"), d("2005-06-01"), "case 14");
    assert_eq!(g.queries[14].canonical_key(), q.canonical_key());
}

#[test]
fn catalog_rows_are_parsed_and_merged() {
    let text = r"Sure:
\begin{tabular}{|l|l|p{5cm}|l|l|l|}
\hline
Domain & Dataset Name & Description & API Available & Link & License \\
\hline
Economics & FRED & Federal Reserve economic series & Yes & \url{https://fred.stlouisfed.org} & Public domain \\
Energy & EIA Open Data & US energy statistics & Yes & \href{https://www.eia.gov/opendata}{EIA} & Public \\
\end{tabular}
More:
\begin{tabular}{llllll}
Economics & fred & duplicate & No & none & n/a \\
Health & OWID COVID & Case counts & No & https://ourworldindata.org & CC-BY \\
\end{tabular}";
    let entries = parse_catalog(text);
    assert_eq!(entries.len(), 4);
    assert_eq!(entries[0].link.as_deref(), Some("https://fred.stlouisfed.org"));
    assert_eq!(entries[1].link.as_deref(), Some("https://www.eia.gov/opendata"));
    assert_eq!(entries[0].has_api, Some(true));
    let merged = merge_catalog(entries);
    let names: Vec<&str> = merged.iter().map(|e| e.name.as_str()).collect();
    assert_eq!(names, ["FRED", "EIA Open Data", "OWID COVID"]);
}
