import json
import random

import pytest
from hypothesis import given
from hypothesis import strategies as st

from choreo.agent import (
    AgentFormatError,
    NodeContext,
    Request,
    ResourceStore,
    apply_request,
    eval_pre,
    fire,
    make_agent,
    parse_agent,
    parse_target,
    step_agent,
    token_enabled,
    unwrap_value,
)
from choreo.expr import EvalError, ExprSyntaxError, Ref, evaluate, parse_expression, references, render_template
from choreo.scenarios import listing1_agent, listing2_agent


def c_div(a, b):
    q = abs(a) // abs(b)
    return q if (a >= 0) == (b >= 0) else -q


@st.composite
def int_exprs(draw, depth=3):
    """(source text, expected value) pairs over small integers, fully parenthesised."""
    if depth == 0 or draw(st.booleans()):
        v = draw(st.integers(0, 50))
        return str(v), v
    op = draw(st.sampled_from(["+", "-", "*", "/", "%", "<", "<=", "==", "!=", "&&", "||"]))
    lt, lv = draw(int_exprs(depth=depth - 1))
    rt, rv = draw(int_exprs(depth=depth - 1))
    if op in "/%" and rv == 0:
        rt, rv = "1", 1
    value = {
        "+": lambda: lv + rv,
        "-": lambda: lv - rv,
        "*": lambda: lv * rv,
        "/": lambda: c_div(lv, rv),
        "%": lambda: lv - rv * c_div(lv, rv),
        "<": lambda: int(lv < rv),
        "<=": lambda: int(lv <= rv),
        "==": lambda: int(lv == rv),
        "!=": lambda: int(lv != rv),
        "&&": lambda: int(bool(lv) and bool(rv)),
        "||": lambda: int(bool(lv) or bool(rv)),
    }[op]()
    return f"({lt} {op} {rt})", value


@given(int_exprs())
def test_integer_expressions_match_reference(case):
    text, expected = case
    assert evaluate(parse_expression(text), lambda r: None) == expected


def test_precedence_without_parentheses():
    assert evaluate(parse_expression("1 + 2 * 3 == 7 && !0"), lambda r: None) == 1
    assert evaluate(parse_expression("-7 / 2"), lambda r: None) == -3
    assert evaluate(parse_expression("-7 % 3"), lambda r: None) == -1


def test_references_and_existence():
    values = {"L#a": "4", "S#time": "20", "L#s": "hello"}
    resolve = lambda r: values.get(r.text)
    assert evaluate(parse_expression("L#a < 5 && S#time % 10 == 0"), resolve) == 1
    assert evaluate(parse_expression("?L#a && !?L#missing"), resolve) == 1
    assert evaluate(parse_expression("L#s == 'hello'"), resolve) == 1
    assert evaluate(parse_expression("L#a++"), resolve) == 5
    with pytest.raises(EvalError):
        evaluate(parse_expression("L#missing + 1"), resolve)
    with pytest.raises(EvalError):
        evaluate(parse_expression("L#s + 1"), resolve)
    with pytest.raises(EvalError):
        evaluate(parse_expression("1 / 0"), resolve)
    assert references(parse_expression("L#a + L#a * S#time")) == [Ref("L", "a"), Ref("S", "time")]


@pytest.mark.parametrize("bad", ["", "1 +", "(1", "L#", "1 2"])
def test_syntax_errors(bad):
    with pytest.raises(ExprSyntaxError):
        parse_expression(bad)


def test_overflow_is_an_error():
    with pytest.raises(EvalError):
        evaluate(parse_expression("9223372036854775807 + 1"), lambda r: None)


def test_template_keeps_unresolved_references():
    values = {"L#light": "3", "L#b": "40"}
    resolve = lambda r: values.get(r.text)
    assert render_template("{'value':'L#light+1'}", resolve) == "{'value':'4'}"
    assert render_template("L#b", resolve) == "40"
    assert render_template("{'value':'R#light+1'}", resolve) == "{'value':'R#light+1'}"
    assert render_template("?value=L#b", resolve) == "?value=40"


@given(st.text(alphabet="abc xyz:-_", max_size=20))
def test_unwrap_value_envelopes(text):
    assert unwrap_value(f"?value={text}") == text
    if "'" not in text and "}" not in text:
        assert unwrap_value(f"{{'value':'{text}'}}") == text


def test_parse_target_and_agent_format():
    t = parse_target("PUT[aaaa::2]:5683/L/light")
    assert (t.method, t.address, t.port, t.path) == ("PUT", "aaaa::2", 5683, "/L/light")
    agent = parse_agent(json.dumps(listing1_agent()))
    assert agent.name == "AgentSensor" and len(agent.targets) == 2
    nested = parse_agent(listing2_agent())
    assert nested.posts[0] == "A#DiscoverDeployer"
    assert nested.posts[1].name == "DiscoverNotifier"
    with pytest.raises(AgentFormatError):
        parse_agent({"NAME": "x", "PRE": "1", "POST": ["a"], "TARGET": []})
    with pytest.raises(AgentFormatError):
        parse_agent("{broken")
    with pytest.raises(AgentFormatError):
        parse_agent({"NAME": "x", "PRE": "1 +", "POST": [], "TARGET": []})


def ctx(time=0, seed=0):
    return NodeContext("n", "aaaa::3", time, random.Random(seed))


def test_listing1_firing_rule():
    agent = parse_agent(listing1_agent())
    store = ResourceStore({"/L/brighness": "40"})
    assert eval_pre(agent, store, ctx(10))
    assert not eval_pre(agent, store, ctx(11))
    reqs = fire(agent, store, ctx(10))
    assert [r.payload for r in reqs] == ["{'value':'R#light+1'}", "40"]
    store.write("/L/brighness", "60")
    assert fire(agent, store, ctx(20)) == []


def test_r_reference_resolves_on_receiver():
    store = ResourceStore({"/L/light": "7"})
    req = Request("PUT", "src", "aaaa::2", 5683, "/L/light", "{'value':'R#light+1'}", 1)
    result = apply_request(store, req)
    assert result.ok and store.get("/L/light") == "8"


def test_tokens_gate_firing():
    agent = make_agent("t", "L#x > 0", [("PUT[0::1]:5683/L/y", "L#x")])
    store = ResourceStore({"/L/x": "1"})
    assert not token_enabled(agent, store)
    store.write("/L/x", "2")
    assert token_enabled(agent, store)
    assert step_agent(agent, store, ctx()) is not None
    assert step_agent(agent, store, ctx()) is None


def test_system_only_agent_is_a_source():
    agent = make_agent("tick", "S#time % 5 == 0", [("PUT[0::1]:5683/L/t", "S#time")])
    store = ResourceStore()
    assert step_agent(agent, store, ctx(5))[0].payload == "5"
    assert step_agent(agent, store, ctx(5)) is not None
    assert step_agent(agent, store, ctx(6)) is None


@given(st.integers(0, 10_000))
def test_rand_is_pinned_per_evaluation(seed):
    agent = make_agent("r", "S#rand >= 0", [("PUT[0::1]:5683/L/a", "S#rand"), ("PUT[0::1]:5683/L/b", "S#rand")])
    reqs = fire(agent, ResourceStore(), ctx(seed=seed))
    assert reqs[0].payload == reqs[1].payload
    assert 0 <= int(reqs[0].payload) < 100


def test_system_writes_carry_no_token():
    store = ResourceStore()
    store.write("/S/temp", "21")
    store.write("/L/x", "1")
    assert store.tokens == {"/L/x": 1}


def test_agents_install_and_delete_themselves():
    inner = {"NAME": "child", "PRE": "1", "POST": [""], "TARGET": ["DELETE[0::1]:5683/A/child"]}
    store = ResourceStore()
    res = apply_request(store, Request("POST", "s", "0::1", 5683, "/A/child", json.dumps(inner), 1))
    assert res.created_agent == "child" and store.live_agents() == ["child"]
    reqs = step_agent(store.agents["child"], store, ctx())
    apply_request(store, reqs[0])
    assert store.live_agents() == [] and "/A/child" not in store.values


def test_invalid_agent_payload_is_rejected():
    store = ResourceStore()
    res = apply_request(store, Request("POST", "s", "0::1", 5683, "/A/bad", "{nope", 1))
    assert not res.ok and store.live_agents() == []
