import pytest
from fastapi.testclient import TestClient

from convgain.service import (
    AnnotationService,
    LOCK_SECONDS,
    SegmentSpec,
    ServiceError,
    Session,
    create_app,
    keyword_overlap,
)
from convgain.textanalysis import content_lemmas, tokenize


class FakeClock:
    def __init__(self, start=1000.0):
        self.now = start

    def __call__(self):
        return self.now

    def advance(self, seconds):
        self.now += seconds


def spec(pos, targets=(3, 4)):
    return SegmentSpec(
        segment_index=pos,
        topic="transit",
        prior_summary="The prior conversation covered bus fares and bike lanes.",
        short_window=(),
        targets=tuple(
            {"index": i, "speaker": "A", "stance": None,
             "text": f"Bus fares keep rising near bike lanes, point {i}."}
            for i in targets
        ),
    )


def make_service(n_segments=2, variant="info_only", annotators=("ann1", "ann2")):
    clock = FakeClock()
    service = AnnotationService(clock=clock)
    service.add_session(
        Session(
            session_id="sess1",
            variant=variant,
            segments=[spec(p, targets=(3 + 10 * p, 4 + 10 * p)) for p in range(n_segments)],
            annotators=set(annotators),
        )
    )
    return service, clock


def rows_for(task, value=3):
    scales = {"info_only": ("cig",), "three_aspects": ("novelty", "relevance", "implication_scope")}
    return [
        {"utterance_index": t["index"], "scores": {s: value for s in scales[task["variant"]]}}
        for t in task["targets"]
    ]


def complete_session(service, clock, annotator, value=3):
    while True:
        try:
            task = service.next_task("sess1", annotator)
        except ServiceError as exc:
            assert exc.code == "session_complete"
            return
        clock.advance(LOCK_SECONDS + 1)
        service.submit_ratings(task["task_id"], rows_for(task, value))


def test_keyword_overlap_matches_set_intersection_oracle():
    summary = "The prior conversation covered bus fares. Fares rose downtown."
    target = "Bus fares downtown keep rising."
    overlap = keyword_overlap(summary, target)
    expected_lemmas = set(content_lemmas(summary)) & set(content_lemmas(target))
    assert set(overlap) == expected_lemmas
    tokens = tokenize(summary)
    for lemma, positions in overlap.items():
        assert positions == sorted(positions)
        for pos in positions:
            assert content_lemmas(tokens[pos]) == [lemma]
    # repeated summary mention keeps every position
    assert len(overlap["fare"]) == 2


def test_keyword_overlap_empty_when_disjoint():
    assert keyword_overlap("The prior conversation covered libraries.",
                           "Bus fares rose.") == {}


def test_next_task_is_chronological_and_idempotent():
    service, clock = make_service()
    first = service.next_task("sess1", "ann1")
    assert first["segment_pos"] == 0
    assert first["segment_count"] == 2
    # re-request before completion returns the same open task
    again = service.next_task("sess1", "ann1")
    assert again["task_id"] == first["task_id"]
    clock.advance(LOCK_SECONDS + 1)
    service.submit_ratings(first["task_id"], rows_for(first))
    second = service.next_task("sess1", "ann1")
    assert second["segment_pos"] == 1
    assert second["task_id"] != first["task_id"]


def test_next_task_rejects_unknown_session_and_annotator():
    service, _ = make_service()
    with pytest.raises(ServiceError) as err:
        service.next_task("nope", "ann1")
    assert (err.value.status, err.value.code) == (404, "unknown_session")
    with pytest.raises(ServiceError) as err:
        service.next_task("sess1", "stranger")
    assert (err.value.status, err.value.code) == (403, "unassigned_annotator")


def test_session_complete_conflict():
    service, clock = make_service(n_segments=1)
    complete_session(service, clock, "ann1")
    with pytest.raises(ServiceError) as err:
        service.next_task("sess1", "ann1")
    assert (err.value.status, err.value.code) == (409, "session_complete")


def test_reading_lock_rejects_then_accepts():
    service, clock = make_service()
    task = service.next_task("sess1", "ann1")
    clock.advance(LOCK_SECONDS - 1)
    with pytest.raises(ServiceError) as err:
        service.submit_ratings(task["task_id"], rows_for(task))
    assert (err.value.status, err.value.code) == (423, "lock_active")
    clock.advance(2)  # past the 60s mark
    result = service.submit_ratings(task["task_id"], rows_for(task))
    assert result["task_complete"]
    # revisions after the first accepted submission are not locked
    result = service.submit_ratings(task["task_id"], rows_for(task, value=2))
    versions = {r["utterance_index"]: r["version"] for r in result["accepted"]}
    assert set(versions.values()) == {2}


def test_submission_validation_codes():
    service, clock = make_service()
    task = service.next_task("sess1", "ann1")
    clock.advance(LOCK_SECONDS + 1)
    cases = [
        ([{"utterance_index": 99, "scores": {"cig": 2}}], "unknown_target"),
        ([{"utterance_index": 3, "scores": {}}], "missing_scale"),
        ([{"utterance_index": 3, "scores": {"novelty": 2}}], "missing_scale"),
        ([{"utterance_index": 3, "scores": {"cig": 5}}], "out_of_range"),
        ([{"utterance_index": 3, "scores": {"cig": 0}}], "out_of_range"),
    ]
    for rows, code in cases:
        with pytest.raises(ServiceError) as err:
            service.submit_ratings(task["task_id"], rows)
        assert (err.value.status, err.value.code) == (422, code)
    # a rejected batch stores nothing
    assert service.ratings_log == []


def test_ratings_are_append_only_latest_wins():
    service, clock = make_service(n_segments=1)
    task = service.next_task("sess1", "ann1")
    clock.advance(LOCK_SECONDS + 1)
    service.submit_ratings(task["task_id"], rows_for(task, value=4))
    service.submit_ratings(task["task_id"], rows_for(task, value=1))
    assert len(service.ratings_log) == 4  # two submissions of two targets
    latest = service.latest_ratings("sess1")
    assert latest["ann1"] == {"0:3": 1, "0:4": 1}


def test_agreement_requires_two_completed_annotators():
    service, clock = make_service(n_segments=1)
    complete_session(service, clock, "ann1")
    with pytest.raises(ServiceError) as err:
        service.agreement("sess1")
    assert (err.value.status, err.value.code) == (409, "insufficient_annotators")
    complete_session(service, clock, "ann2")
    report = service.agreement("sess1")
    assert report.surviving == ("ann1", "ann2")


def test_agreement_directive_recruit_third():
    service, clock = make_service(n_segments=2)
    # ann1 rates everything 1..4 in order; ann2 reverses -> negative kappa
    for annotator, values in (("ann1", [1, 2, 3, 4]), ("ann2", [4, 3, 2, 1])):
        i = 0
        while True:
            try:
                task = service.next_task("sess1", annotator)
            except ServiceError:
                break
            clock.advance(LOCK_SECONDS + 1)
            rows = []
            for t in task["targets"]:
                rows.append({"utterance_index": t["index"], "scores": {"cig": values[i]}})
                i += 1
            service.submit_ratings(task["task_id"], rows)
    report = service.agreement("sess1")
    assert report.directive == "recruit_third"


def test_three_aspects_variant_requires_all_scales():
    service, clock = make_service(variant="three_aspects")
    task = service.next_task("sess1", "ann1")
    clock.advance(LOCK_SECONDS + 1)
    with pytest.raises(ServiceError) as err:
        service.submit_ratings(
            task["task_id"],
            [{"utterance_index": 3, "scores": {"novelty": 2, "relevance": 2}}],
        )
    assert err.value.code == "missing_scale"
    service.submit_ratings(task["task_id"], rows_for(task))


def test_task_payload_includes_overlap_and_lock_basis():
    service, _ = make_service()
    task = service.next_task("sess1", "ann1")
    assert task["served_at"] == 1000.0
    assert set(task["keyword_overlap"]) == {"3", "4"}
    for per_target in task["keyword_overlap"].values():
        assert isinstance(per_target, dict)


def test_http_layer_round_trip():
    service, clock = make_service(n_segments=1)
    client = TestClient(create_app(service))
    health = client.get("/health")
    assert health.status_code == 200
    assert health.json()["status"] == "ok"

    resp = client.get("/sessions/sess1/next-task", params={"annotator": "ann1"})
    assert resp.status_code == 200
    task = resp.json()

    locked = client.post(
        f"/tasks/{task['task_id']}/ratings",
        json={"ratings": [{"utterance_index": 3, "scores": {"cig": 2}}]},
    )
    assert locked.status_code == 423
    assert locked.json()["detail"]["code"] == "lock_active"

    clock.advance(LOCK_SECONDS + 1)
    accepted = client.post(
        f"/tasks/{task['task_id']}/ratings",
        json={"ratings": [
            {"utterance_index": 3, "scores": {"cig": 2}},
            {"utterance_index": 4, "scores": {"cig": 3}},
        ]},
    )
    assert accepted.status_code == 200
    assert accepted.json()["task_complete"]

    too_few = client.get("/sessions/sess1/agreement")
    assert too_few.status_code == 409

    complete_session(service, clock, "ann2")
    # ann1 already completed via HTTP; now agreement is computable
    report = client.get("/sessions/sess1/agreement")
    assert report.status_code == 200
    body = report.json()
    assert set(body) == {
        "krippendorff_alpha", "pairwise_qwk", "mean_qwk",
        "dropped", "directive", "surviving",
    }

    missing = client.get("/sessions/ghost/next-task", params={"annotator": "x"})
    assert missing.status_code == 404
