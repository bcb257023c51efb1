use semrec_core::align::{EntityKind, SemanticStore};
use semrec_core::corpus::InteractionSet;
use semrec_profilegen::mock::{ChatRule, EmbeddingMode, MockServer, Reply, Scenario};
use semrec_profilegen::pipeline::FALLBACK_MODEL;
use semrec_profilegen::{
    build_item_prompt, embed_profiles, generate_profile, generate_profiles, shuffle_store, user_contexts, Cache,
    EntityStatus, Error, GenerationConfig, ItemText, Profile, PromptConfig, Review, ServiceClient, ServiceConfig,
};

fn client(server: &MockServer) -> ServiceClient {
    ServiceClient::new(ServiceConfig {
        base_url: server.base_url().to_owned(),
        backoff_ms: 1,
        max_backoff_ms: 5,
        ..Default::default()
    })
    .unwrap()
}

fn start(scenario: Scenario) -> MockServer {
    MockServer::start(scenario, "127.0.0.1:0").unwrap()
}

fn book(k: usize) -> ItemText {
    ItemText {
        id: format!("b{k}"),
        title: format!("Book {k}"),
        description: k.is_multiple_of(2).then(|| format!("Description of book {k}.")),
        attributes: vec![("genre".into(), ["mystery", "fantasy", "memoir"][k % 3].into())],
        reviews: (0..k % 5 + 1)
            .map(|r| Review {
                user: format!("u{}", (k + r) % 20),
                text: format!("Review {r} of book {k}"),
            })
            .collect(),
    }
}

fn rule(contains: &str, replies: Vec<Reply>) -> ChatRule {
    ChatRule {
        contains: contains.into(),
        replies,
    }
}

fn text(s: &str) -> Reply {
    Reply::Text { text: s.into() }
}

fn good(p: &str) -> Reply {
    Reply::Profile {
        reasoning: format!("because {p}"),
        profile: p.into(),
    }
}

#[test]
fn valid_reply_passes_through_verbatim() {
    let server = start(Scenario {
        chat_rules: vec![rule("Book 1\n", vec![good("Fans of slow mysteries.")])],
        ..Default::default()
    });
    let prompt = build_item_prompt(&book(1), &PromptConfig::default(), 0).unwrap();
    let g = generate_profile(&client(&server), "b1", EntityKind::Item, &prompt).unwrap();
    assert_eq!(g.retries, 0);
    assert_eq!(g.profile.profile, "Fans of slow mysteries.");
    assert_eq!(g.profile.reasoning, "because Fans of slow mysteries.");
    assert_eq!(g.profile.model, "gpt-3.5-turbo");
    assert_eq!(g.profile.fp, prompt.fingerprint());
}

#[test]
fn prose_then_json_succeeds_on_retry() {
    let server = start(Scenario {
        chat_rules: vec![rule("Book 1\n", vec![text("Sure, here is a profile: fans of mysteries."), good("p")])],
        ..Default::default()
    });
    let prompt = build_item_prompt(&book(1), &PromptConfig::default(), 0).unwrap();
    let g = generate_profile(&client(&server), "b1", EntityKind::Item, &prompt).unwrap();
    assert_eq!(g.retries, 1);
    assert_eq!(server.stats().chat_requests, 2);
}

#[test]
fn retry_limit_is_honoured() {
    let server = start(Scenario {
        chat_rules: vec![rule("Book 1\n", vec![text("garbage")])],
        ..Default::default()
    });
    let prompt = build_item_prompt(&book(1), &PromptConfig::default(), 0).unwrap();
    let err = generate_profile(&client(&server), "b1", EntityKind::Item, &prompt).unwrap_err();
    assert!(matches!(err, Error::Unparseable { attempts: 3, .. }), "{err}");
    assert_eq!(server.stats().chat_requests, 3);
    assert_eq!(server.rule_hits(), vec![3]);
}

#[test]
fn throttling_is_retried_and_auth_errors_name_the_endpoint() {
    let server = start(Scenario {
        throttle_first: 2,
        api_key: Some("k".into()),
        ..Default::default()
    });
    let mut cfg = client(&server).config().clone();
    cfg.api_key = Some("k".into());
    let keyed = ServiceClient::new(cfg).unwrap();
    let prompt = build_item_prompt(&book(2), &PromptConfig::default(), 0).unwrap();
    generate_profile(&keyed, "b2", EntityKind::Item, &prompt).unwrap();
    assert_eq!(server.stats().throttled, 2);

    let err = generate_profile(&client(&server), "b2", EntityKind::Item, &prompt).unwrap_err();
    match &err {
        Error::Http { endpoint, status: 401, .. } => assert!(endpoint.ends_with("/v1/chat/completions")),
        other => panic!("unexpected {other}"),
    }
    assert!(err.is_service_error());

    let server = start(Scenario { throttle_first: 100, ..Default::default() });
    let err = generate_profile(&client(&server), "b2", EntityKind::Item, &prompt).unwrap_err();
    assert!(matches!(err, Error::Http { status: 429, .. }));
    assert_eq!(server.stats().throttled, 6);
}

#[test]
fn unreachable_service_is_a_transport_error() {
    let port = {
        let l = std::net::TcpListener::bind("127.0.0.1:0").unwrap();
        l.local_addr().unwrap().port()
    };
    let c = ServiceClient::new(ServiceConfig {
        base_url: format!("http://127.0.0.1:{port}/v1"),
        ..Default::default()
    })
    .unwrap();
    let err = c.embed(&["x".into()]).unwrap_err();
    assert!(matches!(err, Error::Transport { .. }), "{err}");
}

fn profiles_for(set: &InteractionSet) -> Vec<Profile> {
    let p = |id: &str, kind| Profile {
        id: id.into(),
        kind,
        profile: format!("likes {id}"),
        reasoning: "r".into(),
        model: "m".into(),
        fp: String::new(),
    };
    set.ids
        .users
        .iter()
        .map(|u| p(u, EntityKind::User))
        .chain(set.ids.items.iter().map(|v| p(v, EntityKind::Item)))
        .collect()
}

#[test]
fn basis_embeddings_round_trip_through_jsonl() {
    let server = start(Scenario {
        embedding_mode: EmbeddingMode::Basis,
        embedding_dim: 13,
        ..Default::default()
    });
    let set = InteractionSet::from_pairs(&[("u1", "a"), ("u2", "b"), ("u2", "c")]);
    let store = embed_profiles(&profiles_for(&set), &set.ids, &client(&server), None).unwrap();
    assert_eq!(store.dim(), 13);
    assert_eq!(store.provenance.model, "text-embedding-ada-002");
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("sem.jsonl");
    store.write_jsonl(&path, &set.ids).unwrap();
    let back = SemanticStore::load_jsonl(&path, &set.ids).unwrap();
    assert_eq!(back.users, store.users);
    assert_eq!(back.items, store.items);
    assert!(store.users.iter().chain(store.items.iter()).all(|&v| v == 0.0 || v == 1.0));
}

#[test]
fn embedding_batches_drift_and_missing_entities() {
    let server = start(Scenario::default());
    let set = InteractionSet::from_pairs(&[("u1", "a")]);
    let mut cfg = client(&server).config().clone();
    cfg.embedding_batch = 1;
    let one_per_request = ServiceClient::new(cfg.clone()).unwrap();
    embed_profiles(&profiles_for(&set), &set.ids, &one_per_request, None).unwrap();
    assert_eq!(server.stats().embedding_requests, 2);
    assert_eq!(server.stats().embedding_batch_sizes, vec![1, 1]);

    let drifting = start(Scenario { drift_after: Some(1), ..Default::default() });
    cfg.base_url = drifting.base_url().to_owned();
    let err = embed_profiles(&profiles_for(&set), &set.ids, &ServiceClient::new(cfg).unwrap(), None).unwrap_err();
    assert!(matches!(err, Error::Embedding(_)), "{err}");

    let mut partial = profiles_for(&set);
    partial.pop();
    let err = embed_profiles(&partial, &set.ids, &client(&server), None).unwrap_err();
    assert!(err.to_string().contains("item a has no profile"), "{err}");
}

fn corpus() -> (Vec<ItemText>, InteractionSet) {
    let items: Vec<ItemText> = (0..30).map(book).collect();
    let mut pairs = Vec::new();
    for u in 0..20 {
        for k in 0..(u % 7 + 1) {
            pairs.push((format!("u{u}"), format!("b{}", (u * 3 + k * 5) % 30)));
        }
    }
    let set = InteractionSet::from_pairs(&pairs);
    (items, set)
}

#[test]
fn full_pipeline_accounts_for_every_entity() {
    let (items, set) = corpus();
    let users = user_contexts(&set, &items).unwrap();
    let scenario = Scenario {
        chat_rules: vec![
            rule("Title: Book 3\nAttributes", vec![text("never json")]),
            rule("Title: Book 4\nDescription", vec![text("{\"profile\": \"half\"}"), good("Book four readers")]),
        ],
        ..Default::default()
    };
    let server = start(scenario.clone());
    let dir = tempfile::tempdir().unwrap();
    let cache = Cache::open(dir.path()).unwrap();
    let cfg = GenerationConfig::default();
    let run = generate_profiles(&items, &users, &client(&server), &cfg, Some(&cache)).unwrap();

    assert_eq!(run.profiles.len(), 30 + 20);
    assert_eq!(run.report.entities.len(), 50);
    assert_eq!((run.report.succeeded, run.report.failed, run.report.cached), (49, 1, 0));
    let failed = run.report.entities.iter().find(|e| e.status == EntityStatus::Failed).unwrap();
    assert_eq!((failed.id.as_str(), failed.retries), ("b3", 2));
    let b3 = run.profiles.iter().find(|p| p.id == "b3").unwrap();
    assert_eq!(b3.model, FALLBACK_MODEL);
    let b4 = run.report.entities.iter().find(|e| e.id == "b4").unwrap();
    assert_eq!((b4.status, b4.retries), (EntityStatus::Succeeded, 1));
    for p in &run.profiles {
        p.validate().unwrap();
        let line = serde_json::to_string(p).unwrap();
        assert_eq!(&serde_json::from_str::<Profile>(&line).unwrap(), p);
    }
    // user prompts quote the item profiles generated before them
    let b4_profile = "Book four readers";
    let quoting = run.prompts.iter().filter(|p| p.kind == EntityKind::User && p.user.contains(b4_profile));
    assert!(quoting.count() > 0);

    // a second run over the same cache sends no chat requests for cached entities
    let again_server = start(scenario);
    let again = generate_profiles(&items, &users, &client(&again_server), &cfg, Some(&cache)).unwrap();
    assert_eq!((again.report.cached, again.report.failed), (49, 1));
    assert_eq!(again_server.stats().chat_requests, 3);
    assert_eq!(again.prompts, run.prompts);
    assert_eq!(again.profiles, run.profiles);

    let store = embed_profiles(&run.profiles, &set.ids, &client(&server), Some(&cache)).unwrap();
    assert_eq!((store.users.nrows(), store.items.nrows(), store.dim()), (20, 30, 8));
    let requests = server.stats().embedding_requests;
    let cached = embed_profiles(&run.profiles, &set.ids, &client(&server), Some(&cache)).unwrap();
    assert_eq!(cached, store);
    assert_eq!(server.stats().embedding_requests, requests);
}

#[test]
fn shuffling_permutes_within_each_kind() {
    let server = start(Scenario::default());
    let (_, set) = corpus();
    let store = embed_profiles(&profiles_for(&set), &set.ids, &client(&server), None).unwrap();
    let shuffled = shuffle_store(&store, 7);
    assert_ne!(shuffled.users, store.users);
    let sorted = |m: &ndarray::Array2<f64>| {
        let mut rows: Vec<Vec<u64>> = m.rows().into_iter().map(|r| r.iter().map(|v| v.to_bits()).collect()).collect();
        rows.sort();
        rows
    };
    assert_eq!(sorted(&shuffled.users), sorted(&store.users));
    assert_eq!(sorted(&shuffled.items), sorted(&store.items));
    assert_eq!(shuffle_store(&store, 7), shuffled);

    let tiny = InteractionSet::from_pairs(&[("u", "i")]);
    let one = embed_profiles(&profiles_for(&tiny), &tiny.ids, &client(&server), None).unwrap();
    assert_eq!(shuffle_store(&one, 3), one);
}

#[test]
fn http_errors_abort_generation() {
    let (items, set) = corpus();
    let users = user_contexts(&set, &items).unwrap();
    let server = start(Scenario {
        chat_rules: vec![rule("Title: Book 5\nAttributes", vec![Reply::Status { status: 403, body: "denied".into() }])],
        ..Default::default()
    });
    let err = generate_profiles(&items, &users, &client(&server), &GenerationConfig::default(), None).unwrap_err();
    assert!(matches!(err, Error::Http { status: 403, .. }), "{err}");
    assert!(err.to_string().contains("/v1/chat/completions"));
}
