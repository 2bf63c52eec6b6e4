use std::path::{Path, PathBuf};
use std::thread::JoinHandle;

use prefsel::annotation::{enqueue_human_task, won_label, Session};
use prefsel::dataset::{load_preferences, CandidatePool};
use prefsel::selection::{SelectionResult, Solver, StrategyKind};
use prefsel::service::{serve, ServiceState};
use serde_json::{json, Value};
use tokio::sync::oneshot;

struct Server {
    base: String,
    stop: Option<oneshot::Sender<()>>,
    handle: Option<JoinHandle<prefsel::Result<()>>>,
}

impl Server {
    fn start(journal: &Path, output: PathBuf) -> Self {
        let session = Session::open(journal, 5).unwrap();
        let state = ServiceState::new(session, Some(output));
        let (stop_tx, stop_rx) = oneshot::channel::<()>();
        let (addr_tx, addr_rx) = std::sync::mpsc::channel();
        let handle = std::thread::spawn(move || {
            let rt = tokio::runtime::Runtime::new().unwrap();
            rt.block_on(async move {
                let listener = tokio::net::TcpListener::bind("127.0.0.1:0").await.unwrap();
                addr_tx.send(listener.local_addr().unwrap()).unwrap();
                serve(listener, state, None, async {
                    let _ = stop_rx.await;
                })
                .await
            })
        });
        Self {
            base: format!("http://{}", addr_rx.recv().unwrap()),
            stop: Some(stop_tx),
            handle: Some(handle),
        }
    }

    fn stop(mut self) {
        self.stop.take().unwrap().send(()).unwrap();
        self.handle.take().unwrap().join().unwrap().unwrap();
    }

    fn agent() -> ureq::Agent {
        ureq::Agent::config_builder()
            .http_status_as_error(false)
            .build()
            .into()
    }

    fn get(&self, path: &str) -> (u16, Option<Value>) {
        let mut resp = Self::agent().get(format!("{}{path}", self.base)).call().unwrap();
        let status = resp.status().as_u16();
        let body = resp.body_mut().read_to_string().unwrap();
        (status, serde_json::from_str(&body).ok())
    }

    fn submit(&self, task_id: &str, best: usize, worst: usize) -> (u16, Value) {
        let mut resp = Self::agent()
            .post(format!("{}/api/session/submit", self.base))
            .send_json(json!({ "task_id": task_id, "best": best, "worst": worst }))
            .unwrap();
        let status = resp.status().as_u16();
        (status, resp.body_mut().read_json().unwrap())
    }
}

fn pools() -> Vec<CandidatePool> {
    (0..5)
        .map(|i| {
            CandidatePool::new(
                format!("t{i}"),
                format!("question {i}"),
                (0..6).map(|j| format!("answer {j} for {i}")).collect(),
            )
        })
        .collect()
}

fn seed_journal(journal: &Path) -> Vec<CandidatePool> {
    let pools = pools();
    let mut session = Session::open(journal, 5).unwrap();
    for (i, pool) in pools.iter().enumerate() {
        let sel = SelectionResult::new(StrategyKind::Aepo, Solver::Exact, vec![i, 5]);
        enqueue_human_task(&sel, pool, &mut session).unwrap();
    }
    pools
}

#[test]
fn session_api_end_to_end_with_restart() {
    let dir = tempfile::tempdir().unwrap();
    let journal = dir.path().join("session.journal");
    let output = dir.path().join("prefs.jsonl");
    let pools = seed_journal(&journal);

    let server = Server::start(&journal, output.clone());
    let (status, root) = server.get("/");
    assert_eq!(status, 200);
    assert!(root.is_none());

    let (status, task) = server.get("/api/session/next");
    assert_eq!(status, 200);
    let task = task.unwrap();
    assert_eq!(task["task_id"], "t0");
    assert_eq!(task["status"], "pending");
    assert!(task.get("permutation").is_none());
    assert!(task.get("strategy").is_none());
    assert_eq!(task["responses"].as_array().unwrap().len(), 2);

    // Another cursor is handed a different task while t0 is leased.
    let (_, other) = server.get("/api/session/next?cursor=second");
    assert_eq!(other.unwrap()["task_id"], "t1");

    let (status, progress) = server.submit("t0", 0, 1);
    assert_eq!(status, 200);
    assert_eq!(progress, json!({"done": 1, "pending": 4, "consumed_annotations": 2}));

    let (status, _) = server.submit("t0", 1, 0);
    assert_eq!(status, 409);
    let (status, _) = server.submit("t2", 1, 1);
    assert_eq!(status, 422);
    let (status, _) = server.submit("nope", 0, 1);
    assert_eq!(status, 404);
    let (_, progress) = server.get("/api/session/progress");
    assert_eq!(progress.unwrap()["consumed_annotations"], 2);

    let (status, _) = server.get("/api/task/missing");
    assert_eq!(status, 404);
    let (status, done) = server.get("/api/task/t0");
    assert_eq!(status, 200);
    let done = done.unwrap();
    assert_eq!(done["status"], "done");
    assert_eq!(done["best_display_index"], 0);

    assert_eq!(server.submit("t1", 1, 0).0, 200);
    assert_eq!(load_preferences(&output).unwrap().len(), 2);
    server.stop();

    // Restart from the journal: nothing judged so far is lost or re-queued.
    let server = Server::start(&journal, output.clone());
    let (_, progress) = server.get("/api/session/progress");
    assert_eq!(
        progress.unwrap(),
        json!({"done": 2, "pending": 3, "consumed_annotations": 4})
    );
    let mut seen = Vec::new();
    loop {
        let (status, task) = server.get("/api/session/next");
        if status == 204 {
            break;
        }
        let id = task.unwrap()["task_id"].as_str().unwrap().to_string();
        assert_eq!(server.submit(&id, 0, 1).0, 200);
        seen.push(id);
    }
    assert_eq!(seen, ["t2", "t3", "t4"]);
    let (_, progress) = server.get("/api/session/progress");
    assert_eq!(
        progress.unwrap(),
        json!({"done": 5, "pending": 0, "consumed_annotations": 10})
    );
    server.stop();

    // Pairs follow the displayed judgments through the stored permutation.
    let session = Session::open(&journal, 5).unwrap();
    assert_eq!(session.ledger().consumed_annotations, 10);
    assert_eq!(session.ledger().planned_annotations, 10);
    let pairs = load_preferences(&output).unwrap();
    assert_eq!(pairs, session.pairs());
    assert_eq!(pairs.len(), 5);
    for (pair, task) in pairs.iter().zip(session.tasks()) {
        let pool = &pools[task.task_id[1..].parse::<usize>().unwrap()];
        let best = task.best_display_index.unwrap();
        let worst = task.worst_display_index.unwrap();
        assert_eq!(pair.chosen_index, task.permutation[best]);
        assert_eq!(pair.rejected_index, task.permutation[worst]);
        assert_eq!(pair.chosen, pool.responses[pair.chosen_index]);
        assert_eq!(pair.rejected, pool.responses[pair.rejected_index]);
        assert_eq!(pair.annotations_used, 2);
        // Same outcome as labeling a score table that ranks best over worst.
        let scores: Vec<(usize, f64)> = task
            .permutation
            .iter()
            .enumerate()
            .map(|(slot, &i)| (i, if slot == best { 1.0 } else if slot == worst { -1.0 } else { 0.0 }))
            .collect();
        assert_eq!(won_label(&scores).unwrap(), (pair.chosen_index, pair.rejected_index));
    }
}

#[test]
fn journal_judgment_for_unknown_task_is_reported_by_line() {
    let dir = tempfile::tempdir().unwrap();
    let journal = dir.path().join("session.journal");
    seed_journal(&journal);
    let mut text = std::fs::read_to_string(&journal).unwrap();
    text.push_str("{\"event\":\"judgment\",\"task_id\":\"t9\",\"best\":0,\"worst\":1}\n");
    std::fs::write(&journal, text).unwrap();
    let err = Session::open(&journal, 5).err().unwrap().to_string();
    assert!(err.contains(":6:"), "{err}");
}
