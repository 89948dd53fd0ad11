import http.server
import json
import threading

import pytest
from hypothesis import given
from hypothesis import strategies as st

from safegen.errors import (
    BackendExhausted,
    ContextOverflow,
    DeadlineExceeded,
    InvariantError,
    NoCodeFound,
    TransportError,
)
from safegen.llm_handler import (
    HttpBackend,
    PromptContext,
    ReplayBackend,
    Strategy,
    build_prompt,
    extract_code,
    generate,
    hash_code,
    make_artifact,
    scan_dependencies,
    schedule_strategy,
    verify_dependencies,
)


class TestCodeExtraction:
    def test_single_tagged_block(self):
        art = extract_code("prose\n```cpp\nint x;\n```\nmore prose\n")
        assert art.code == "int x;\n"
        assert art.language_tag == "cpp"

    def test_last_tagged_block_wins(self):
        response = (
            "first draft:\n```cpp\nint draft;\n```\n"
            "after fixing the bug:\n```cpp\nint fixed;\n```\n"
        )
        assert extract_code(response).code == "int fixed;\n"

    def test_alternate_cpp_tags(self):
        for tag in ("c++", "cxx", "cc", "CPP"):
            art = extract_code(f"```{tag}\nint y;\n```")
            assert art.code == "int y;\n", tag

    def test_untagged_block_only_as_fallback(self):
        both = "```\nuntagged\n```\n```cpp\ntagged\n```\n"
        assert extract_code(both).code == "tagged\n"
        only_untagged = "```\nuntagged\n```\n"
        assert extract_code(only_untagged).code == "untagged\n"

    def test_wrong_language_not_taken(self):
        with pytest.raises(NoCodeFound):
            extract_code("```python\nprint('hi')\n```")

    def test_no_block_raises(self):
        with pytest.raises(NoCodeFound):
            extract_code("I would suggest writing some C++ here.")

    def test_code_always_newline_terminated(self):
        assert extract_code("```cpp\nint z;```").code.endswith("\n")

    def test_hash_is_stable_and_content_addressed(self):
        a = make_artifact("int x;\n", "cpp")
        b = make_artifact("int x;\n", "cpp")
        c = make_artifact("int y;\n", "cpp")
        assert a.content_hash == b.content_hash == hash_code("int x;\n")
        assert a.content_hash != c.content_hash


class TestDependencyScan:
    def test_includes_found_in_order_deduped(self):
        code = (
            '#include <vector>\n#include "mine.h"\n'
            "#include <vector>\n#include <cmath>\n"
        )
        assert scan_dependencies(code) == ("vector", "mine.h", "cmath")

    def test_verify_flags_undeclared(self, design):
        art = make_artifact('#include "secret_api.h"\nint f() { return 0; }\n', "cpp")
        assert verify_dependencies(art, design, ["vector"]) == ["secret_api.h"]

    def test_verify_accepts_allowlisted(self, design):
        art = make_artifact("#include <algorithm>\n", "cpp")
        assert verify_dependencies(art, design, ["algorithm"]) == []


class TestStrategySchedule:
    def test_first_attempt_zero_shot(self):
        assert schedule_strategy(1, False) is Strategy.ZERO_SHOT

    def test_later_attempts_few_shot(self):
        assert schedule_strategy(2, False) is Strategy.FEW_SHOT
        assert schedule_strategy(9, False) is Strategy.FEW_SHOT

    def test_partial_pass_pivots_to_chain_of_thought(self):
        assert schedule_strategy(2, True) is Strategy.CHAIN_OF_THOUGHT
        assert schedule_strategy(1, True) is Strategy.CHAIN_OF_THOUGHT

    @given(st.integers(min_value=1, max_value=50), st.booleans())
    def test_monotone_in_iteration(self, iteration, partial):
        # escalation never goes backwards as attempts accumulate
        assert schedule_strategy(iteration + 1, partial) >= schedule_strategy(
            iteration, partial
        )


def ctx(strategy=Strategy.ZERO_SHOT, **kw):
    defaults = dict(
        role_preamble="You write C++.",
        spec_block="## spec\ndetails",
        strategy=strategy,
        shots=(("task text", "solution text"),),
        best_prior_solution="int best;\n",
        error_feedback="",
    )
    defaults.update(kw)
    return PromptContext(**defaults)


class TestPromptAssembly:
    def test_zero_shot_excludes_shots_and_prior(self):
        prompt = build_prompt(ctx(Strategy.ZERO_SHOT))
        assert "You write C++." in prompt
        assert "## spec" in prompt
        assert "Worked example" not in prompt
        assert "Best solution" not in prompt

    def test_few_shot_includes_shots(self):
        prompt = build_prompt(ctx(Strategy.FEW_SHOT))
        assert "Worked example 1" in prompt
        assert "task text" in prompt and "solution text" in prompt

    def test_chain_of_thought_includes_best_prior(self):
        prompt = build_prompt(ctx(Strategy.CHAIN_OF_THOUGHT))
        assert "int best;" in prompt
        assert "step by step" in prompt

    def test_feedback_appended_when_present(self):
        prompt = build_prompt(ctx(error_feedback="2/12 failed; categories: range×2"))
        assert prompt.rstrip().endswith("2/12 failed; categories: range×2")

    def test_budget_enforced(self):
        with pytest.raises(ContextOverflow):
            build_prompt(ctx(), char_budget=10)

    def test_empty_prompt_rejected_by_generate(self):
        with pytest.raises(InvariantError):
            generate(ReplayBackend(["x"]), "")


class TestReplayBackend:
    def test_plays_in_order_then_exhausts(self):
        backend = ReplayBackend(["a", "b"])
        assert generate(backend, "p") == "a"
        assert generate(backend, "p") == "b"
        with pytest.raises(BackendExhausted):
            generate(backend, "p")

    def test_from_dir_sorts_numerically(self, tmp_path):
        (tmp_path / "001.txt").write_text("second", encoding="utf-8")
        (tmp_path / "000.txt").write_text("first", encoding="utf-8")
        backend = ReplayBackend.from_dir(tmp_path)
        assert backend.generate("p") == "first"
        assert backend.generate("p") == "second"


class _StubHandler(http.server.BaseHTTPRequestHandler):
    """Scripted chat-completion endpoint; behavior keyed by request path."""

    calls = {"n500": 0}

    def do_POST(self):
        length = int(self.headers["Content-Length"])
        body = json.loads(self.rfile.read(length))
        if self.path == "/ok":
            reply = {
                "choices": [
                    {"message": {"content": f"echo:{body['model']}"}}
                ]
            }
            payload = json.dumps(reply).encode()
            self.send_response(200)
            self.send_header("Content-Type", "application/json")
            self.end_headers()
            self.wfile.write(payload)
        elif self.path == "/flaky":
            _StubHandler.calls["n500"] += 1
            if _StubHandler.calls["n500"] < 3:
                self.send_response(503)
                self.end_headers()
            else:
                payload = json.dumps(
                    {"choices": [{"message": {"content": "recovered"}}]}
                ).encode()
                self.send_response(200)
                self.end_headers()
                self.wfile.write(payload)
        elif self.path == "/badjson":
            self.send_response(200)
            self.end_headers()
            self.wfile.write(b'{"unexpected": true}')
        else:
            self.send_response(404)
            self.end_headers()
            self.wfile.write(b"no such model")

    def log_message(self, *args):
        pass


@pytest.fixture()
def stub_server():
    server = http.server.HTTPServer(("127.0.0.1", 0), _StubHandler)
    thread = threading.Thread(target=server.serve_forever, daemon=True)
    thread.start()
    _StubHandler.calls["n500"] = 0
    yield f"http://127.0.0.1:{server.server_address[1]}"
    server.shutdown()


class TestHttpBackend:
    def test_success_path(self, stub_server):
        backend = HttpBackend(stub_server + "/ok", model="m1", retries=0)
        assert backend.generate("hello") == "echo:m1"

    def test_retries_on_5xx_then_succeeds(self, stub_server):
        backend = HttpBackend(
            stub_server + "/flaky", model="m1", retries=3, backoff_s=0.0
        )
        assert backend.generate("hello") == "recovered"
        assert _StubHandler.calls["n500"] == 3

    def test_4xx_is_immediate_error(self, stub_server):
        backend = HttpBackend(stub_server + "/missing", model="m1", retries=3)
        with pytest.raises(TransportError):
            backend.generate("hello")

    def test_malformed_completion(self, stub_server):
        backend = HttpBackend(stub_server + "/badjson", model="m1", retries=0)
        with pytest.raises(TransportError):
            backend.generate("hello")

    def test_connection_refused_exhausts_retries(self):
        backend = HttpBackend(
            "http://127.0.0.1:9", model="m1", retries=1, backoff_s=0.0
        )
        with pytest.raises((TransportError, DeadlineExceeded)):
            backend.generate("hello")
