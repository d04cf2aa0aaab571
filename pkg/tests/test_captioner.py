import numpy as np
import pytest

from toontex import captioner as cap
from toontex import rasterizer as ras
from toontex.dataforge import TextureSpec, generate_texture, region_template
from toontex.errors import CaptionError, ContractError


def make_clients(followup_text="Is the texture striped?"):
    vqa = cap.CaptureAgentClient(cap.ScriptedAgentClient(
        lambda ref, q, hist: f"answer {len(hist) + 1}"))
    llm = cap.CaptureAgentClient(cap.ScriptedAgentClient(
        lambda ref, q, hist: followup_text if "follow-up" in q else "final caption"))
    return vqa, llm


class TestCaptionView:
    def test_exactly_six_pairs_hardcoded_first(self):
        vqa, llm = make_clients()
        session = cap.caption_view("img", vqa, llm)
        assert len(session.qa) == 6
        for i, expected in enumerate(cap.HARD_CODED_QUESTIONS):
            assert session.qa[i][0] == expected

    def test_hardcoded_questions_verbatim(self):
        assert cap.HARD_CODED_QUESTIONS == (
            "Describe the image in detail",
            "What is the color of this object?",
            "What is the object wearing?",
        )

    def test_head_instruction_on_every_vqa_request(self):
        vqa, llm = make_clients()
        cap.caption_view("img", vqa, llm)
        assert len(vqa.requests) == 6
        for req in vqa.requests:
            assert "Don't answer any contents about the pose" in req["question"]
            assert req["question"].startswith(cap.HEAD_INSTRUCTION)

    def test_followup_count_configurable(self):
        vqa, llm = make_clients()
        session = cap.caption_view("img", vqa, llm, followups=5)
        assert len(session.qa) == 3 + 5

    def test_empty_followup_is_error_with_partial_transcript(self):
        vqa, _ = make_clients()
        llm = cap.ScriptedAgentClient(lambda ref, q, hist: "")
        with pytest.raises(CaptionError, match="empty follow-up") as err:
            cap.caption_view("img", vqa, llm)
        assert len(err.value.session.qa) == 3  # the hard-coded triple survived

    def test_vqa_failure_carries_partial_transcript(self):
        calls = {"n": 0}

        def flaky(ref, q, hist):
            calls["n"] += 1
            if calls["n"] == 3:
                raise RuntimeError("vqa down")
            return "ok"

        vqa = cap.ScriptedAgentClient(flaky)
        _, llm = make_clients()
        with pytest.raises(CaptionError) as err:
            cap.caption_view("img", vqa, llm.inner)
        assert len(err.value.session.qa) == 2


class TestSummarizeViews:
    def test_single_session_contains_all_answers(self):
        vqa, llm = make_clients()
        session = cap.caption_view("img", vqa, llm)
        echo = cap.ScriptedAgentClient(lambda ref, q, hist: q)
        summary = cap.summarize_views([session], echo)
        for _, answer in session.qa:
            assert answer in summary

    def test_transcripts_in_view_order_one_request(self):
        vqa, llm = make_clients()
        sessions = [cap.caption_view("img", vqa, llm, view_id=v) for v in range(8)]
        capture = cap.CaptureAgentClient(
            cap.ScriptedAgentClient(lambda ref, q, hist: "summary"))
        cap.summarize_views(sessions, capture)
        assert len(capture.requests) == 1
        prompt = capture.requests[0]["question"]
        positions = [prompt.index(f"[view {v}]") for v in range(8)]
        assert positions == sorted(positions)

    def test_duplicate_removal_mock(self):
        vqa = cap.ScriptedAgentClient(lambda ref, q, hist: "same answer")
        _, llm = make_clients()
        sessions = [cap.caption_view("img", vqa, llm.inner, view_id=v)
                    for v in range(3)]

        def dedupe(ref, q, hist):
            seen = []
            for line in q.splitlines():
                if line.startswith("A: ") and line not in seen:
                    seen.append(line)
            return " | ".join(seen)

        summary = cap.summarize_views(sessions, cap.ScriptedAgentClient(dedupe))
        assert summary == "A: same answer"

    def test_empty_sessions_rejected(self):
        _, llm = make_clients()
        with pytest.raises(ContractError):
            cap.summarize_views([], llm)


class TestCaptionModel:
    @pytest.fixture(scope="class")
    def textured(self):
        template = region_template(32)
        tex = generate_texture(
            TextureSpec("rabbit", "shirt and pants", ("blue", "white"), seed=1),
            template)
        return tex

    def test_deterministic_with_mocks(self, rabbit, textured):
        views = ras.view_set(size=32)[:2]
        vqa1, llm1 = make_clients()
        c1, s1 = cap.caption_model(rabbit, textured, vqa1, llm1, views=views)
        vqa2, llm2 = make_clients()
        c2, s2 = cap.caption_model(rabbit, textured, vqa2, llm2, views=views)
        assert c1 == c2
        assert [s.qa for s in s1] == [s.qa for s in s2]

    def test_one_session_per_view(self, rabbit, textured):
        views = ras.view_set(size=32)[:3]
        vqa, llm = make_clients()
        _, sessions = cap.caption_model(rabbit, textured, vqa, llm, views=views)
        assert [s.view_id for s in sessions] == [0, 1, 2]
        assert len(vqa.requests) == 3 * 6

    def test_image_reference_is_self_contained(self, rng):
        ref = cap.image_reference(rng.random((8, 8, 3)))
        assert ref.startswith("data:image/x-portable-pixmap;base64,")
