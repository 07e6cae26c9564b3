import json

import pytest
from fastapi.testclient import TestClient

from fairplan.demo import demo_orders_csv
from fairplan.service import create_app


@pytest.fixture()
def client(tmp_path):
    app = create_app(records_dir=str(tmp_path / "records"), rl_train_steps=300)
    with TestClient(app) as c:
        yield c


def post_solve(client, **overrides):
    data = {
        "objective": "balanced",
        "reward": "balanced",
        "strategy": "greedy",
        "days_to_plan": 5,
        "seed": 0,
    }
    data.update(overrides)
    return client.post(
        "/solve",
        files={"orders": ("orders.csv", demo_orders_csv(), "text/csv")},
        data={k: str(v) for k, v in data.items()},
    )


def test_solve_smoke(client):
    response = post_solve(client)
    assert response.status_code == 200, response.text
    body = response.json()
    assert body["id"]
    assert body["unfilled_slots"] == 0
    assert body["kpis"]["mean_pi"] > 0


def test_unknown_strategy_400_names_field(client):
    response = post_solve(client, strategy="sa")
    assert response.status_code == 400
    assert "strategy" in response.json()["detail"]


def test_bad_days_to_plan_400(client):
    response = post_solve(client, days_to_plan=0)
    assert response.status_code == 400
    assert "days_to_plan" in response.json()["detail"]


def test_invalid_csv_400(client):
    response = client.post(
        "/solve",
        files={"orders": ("orders.csv", "not,a,valid\nheader,at,all\n", "text/csv")},
        data={"objective": "balanced", "reward": "balanced", "strategy": "greedy"},
    )
    assert response.status_code == 400
    assert "header" in response.json()["detail"]


def test_solution_roundtrip_and_index(client):
    record_id = post_solve(client).json()["id"]
    got = client.get(f"/solutions/{record_id}")
    assert got.status_code == 200
    doc = got.json()
    assert doc["id"] == record_id
    assert doc["record"]["request"]["objective"] == "balanced"
    assert doc["record"]["timeboxes"]
    index = client.get("/solutions").json()
    assert [row["id"] for row in index] == [record_id]
    assert index[0]["kpis"]["mean_pi"] > 0


def test_unknown_solution_404(client):
    assert client.get("/solutions/nope").status_code == 404


def test_empty_store_empty_index(client):
    assert client.get("/solutions").json() == []


def test_replay_identical_record(client):
    first = post_solve(client, seed=7).json()["id"]
    second = post_solve(client, seed=7).json()["id"]
    assert first == second  # content-hashed: identical request -> identical record
    a = client.get(f"/solutions/{first}").json()["record"]
    b = client.get(f"/solutions/{second}").json()["record"]
    assert json.dumps(a, sort_keys=True) == json.dumps(b, sort_keys=True)


def test_solve_422_on_unfillable(client, tmp_path):
    # strip the context down to a single worker: most slots cannot be filled
    from fairplan.demo import demo_context

    context = demo_context()
    context["workers"] = context["workers"][:1]
    context["factors"] = [f for f in context["factors"] if f["worker_id"] == "w01"]
    context["resilience"] = [r for r in context["resilience"] if r["worker_id"] == "w01"]
    app = create_app(context=context, records_dir=str(tmp_path / "records2"))
    with TestClient(app) as thin:
        response = post_solve(thin)
        assert response.status_code == 422
        body = response.json()
        assert body["unfilled_slots"] > 0
        assert thin.get(f"/solutions/{body['id']}").status_code == 200  # record persisted


def test_grid_subset_runs_end_to_end(client):
    # one strategy per row of the grid keeps the suite quick; the full
    # 36-combination sweep runs in the acceptance suite
    for objective, strategy in (("makespan", "greedy"), ("tardiness", "mcts"), ("balanced", "rl")):
        for reward in ("preference", "balanced"):
            response = post_solve(client, objective=objective, reward=reward, strategy=strategy)
            assert response.status_code == 200, response.text


def test_openapi_served(client):
    spec = client.get("/openapi.json")
    assert spec.status_code == 200
    assert "/solve" in spec.json()["paths"]


# -- episodes -----------------------------------------------------------------


def test_episode_flow(client):
    record_id = post_solve(client).json()["id"]
    created = client.post("/episodes", json={"solution_id": record_id}).json()
    assert created["n_actions"] == 774
    assert created["n_rows"] == 18 and created["n_workers"] == 43

    episode_id = created["id"]
    mask = client.get(f"/episodes/{episode_id}/mask").json()
    assert len(mask["mask"]) == 774
    assert mask["active_interval"] == 1
    assert mask["mask"][43] is True

    step = client.post(f"/episodes/{episode_id}/step", json={"action": 43})
    assert step.status_code == 200
    body = step.json()
    assert body["worker_id"] == "w01"
    assert body["line_id"] == "l2"
    assert body["reward"] == pytest.approx(2.46, abs=1e-9)

    refreshed = client.get(f"/episodes/{episode_id}/mask").json()
    assert refreshed["rows"][1]["workers"] == ["w01"]


def test_episode_illegal_step_409_state_unchanged(client):
    record_id = post_solve(client).json()["id"]
    episode_id = client.post("/episodes", json={"solution_id": record_id}).json()["id"]
    mask = client.get(f"/episodes/{episode_id}/mask").json()["mask"]
    illegal = mask.index(False)
    response = client.post(f"/episodes/{episode_id}/step", json={"action": illegal})
    assert response.status_code == 409
    after = client.get(f"/episodes/{episode_id}/mask").json()
    assert after["decision_steps"] == 0
    assert after["mask"] == mask


def test_episode_unknown_404(client):
    assert client.get("/episodes/ep-9999/mask").status_code == 404
    assert client.post("/episodes", json={"solution_id": "nope"}).status_code == 404


def test_episode_terminal_410(client):
    record_id = post_solve(client).json()["id"]
    episode_id = client.post("/episodes", json={"solution_id": record_id}).json()["id"]
    while True:
        mask = client.get(f"/episodes/{episode_id}/mask").json()
        if mask["terminal"]:
            break
        action = mask["mask"].index(True)
        client.post(f"/episodes/{episode_id}/step", json={"action": action})
    response = client.post(f"/episodes/{episode_id}/step", json={"action": 0})
    assert response.status_code == 410


def test_episode_mask_matches_env_masking(client):
    record_id = post_solve(client).json()["id"]
    episode_id = client.post("/episodes", json={"solution_id": record_id}).json()["id"]
    # stepping legal actions reported by the mask never yields 409
    for _ in range(20):
        mask = client.get(f"/episodes/{episode_id}/mask").json()
        if mask["terminal"]:
            break
        action = mask["mask"].index(True)
        assert client.post(f"/episodes/{episode_id}/step", json={"action": action}).status_code == 200
