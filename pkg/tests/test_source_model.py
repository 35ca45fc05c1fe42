from __future__ import annotations

import random

import pytest

from autorefactor.source_model import (
    CallGraph,
    MethodRef,
    ParseError,
    SourceLookupError,
    build_call_graph,
    class_content,
    direct_callees,
    direct_callers,
    file_content,
    mask_code,
    method_text,
    normalize_statement,
    parse_source,
    parse_tree,
    resolve_method,
    segment_statements,
)

import helpers


# ---------------------------------------------------------------------------
# Masking
# ---------------------------------------------------------------------------

def test_mask_preserves_length_and_newlines():
    text = 'int a = 1; // note\nString s = "x;y{z}";\n/* block\ncomment */ int b;\n'
    masked = mask_code(text)
    assert len(masked) == len(text)
    assert masked.count("\n") == text.count("\n")
    assert ";" not in masked[masked.index('"'):masked.index('"') + 8]


def test_mask_hides_braces_in_strings():
    masked = mask_code('x = "{";')
    assert "{" not in masked
    assert masked.endswith(";")


def test_mask_hides_line_and_block_comments():
    masked = mask_code("a; // {\nb; /* } */ c;")
    assert "{" not in masked and "}" not in masked
    assert masked.count(";") == 3


# ---------------------------------------------------------------------------
# Statement normalization
# ---------------------------------------------------------------------------

def test_normalize_strips_comment_and_whitespace():
    assert normalize_statement("int  x = 1 ; // init") == "int x = 1;"


def test_normalize_fixed_point():
    assert normalize_statement("x=1;") == "x=1;"


def test_normalize_block_comment_prefix():
    assert normalize_statement("/*a*/ return   y ;") == "return y;"


def test_normalize_preserves_string_interior():
    assert normalize_statement('s = "a  b" ;') == 's = "a  b";'


def test_normalize_idempotent_on_random_token_soup():
    rng = random.Random(20240817)
    tokens = ["int", "x", "=", "1", ";", "//c", "/*c*/", "  ", "\t", "foo(",
              ")", "\n", '"a b"', "y"]
    for _ in range(200):
        raw = " ".join(rng.choice(tokens) for _ in range(rng.randint(0, 12)))
        once = normalize_statement(raw)
        assert normalize_statement(once) == once


# ---------------------------------------------------------------------------
# Statement segmentation
# ---------------------------------------------------------------------------

def test_segment_kinds_and_depths():
    body = """int a = 0;
for (int i = 0; i < 3; i++) {
    a += i;
}
return a;"""
    stmts = segment_statements(body)
    kinds = [(s.kind, s.depth) for s in stmts]
    assert kinds == [("simple", 0), ("control-header", 0), ("simple", 1),
                     ("block-close", 0), ("simple", 0)]
    assert [s.index for s in stmts] == list(range(len(stmts)))


def test_segment_for_header_semicolons_do_not_split():
    stmts = segment_statements("for (int i = 0; i < 3; i++) { x(); }")
    assert stmts[0].kind == "control-header"
    assert "i < 3" in stmts[0].raw


def test_segment_block_close_depth_matches_opener():
    body = "if (a) { if (b) { c(); } }"
    stmts = segment_statements(body)
    opens = [s for s in stmts if s.kind == "control-header"]
    closes = [s for s in stmts if s.kind == "block-close"]
    assert [s.depth for s in opens] == [0, 1]
    assert sorted(s.depth for s in closes) == [0, 1]


def test_segment_bare_block_is_block_open():
    stmts = segment_statements("{ x(); }")
    assert stmts[0].kind == "block-open"


# ---------------------------------------------------------------------------
# parse_source
# ---------------------------------------------------------------------------

def test_parse_degenerate_class():
    unit = parse_source("A.java", "class A {}")
    assert len(unit.classes) == 1
    assert unit.classes[0].name == "A"
    assert unit.classes[0].methods == []


def test_parse_two_methods_disjoint_spans():
    unit = parse_source("T.java", """package p;

public class T {
    public void f() {
        int a = 1;
    }

    public void g() {
        int b = 2;
    }
}
""")
    cls = unit.classes[0]
    assert [m.name for m in cls.methods] == ["f", "g"]
    (f_start, f_end), (g_start, g_end) = cls.methods[0].span, cls.methods[1].span
    assert f_end < g_start
    assert cls.qualified_name == "p.T"


def test_parse_unbalanced_braces_errors_with_line():
    with pytest.raises(ParseError) as err:
        parse_source("A.java", "class A { void f( {\n")
    assert err.value.path == "A.java"
    assert err.value.line >= 1


def test_parse_package_imports_fields():
    unit = parse_source("A.java", """package com.app.core;

import java.util.List;
import java.io.File;

public class A extends Base implements Runnable {
    private static final int LIMIT = 10;
    protected String name;

    public void run() {
        name = "x";
    }
}
""")
    assert unit.package == "com.app.core"
    assert unit.imports == ["java.util.List", "java.io.File"]
    cls = unit.classes[0]
    assert cls.extends == "Base"
    assert cls.implements == ["Runnable"]
    assert [(f.type_text, f.name) for f in cls.fields] == \
        [("int", "LIMIT"), ("String", "name")]
    assert "final" in cls.fields[0].modifiers


def test_parse_constructor_and_params():
    unit = parse_source("A.java", """package p;

public class Pair {
    private int a;

    public Pair(int left, int right) {
        a = left + right;
    }

    public int get(int scale) {
        return a * scale;
    }
}
""")
    ctor, getter = unit.classes[0].methods
    assert ctor.name == "Pair" and ctor.arity == 2
    assert getter.params == [("int", "scale")]
    assert getter.ref == MethodRef("p.Pair", "get", 1)


def test_parse_print_stability():
    unit = parse_source("Calc.java", helpers.CALC_BEFORE)
    again = parse_source("Calc.java", unit.text)
    assert [c.name for c in again.classes] == [c.name for c in unit.classes]
    for m1, m2 in zip(unit.classes[0].methods, again.classes[0].methods):
        assert [s.normalized for s in m1.body] == [s.normalized for s in m2.body]
        assert m1.span == m2.span


def test_body_raw_is_substring_of_file():
    unit = parse_source("Calc.java", helpers.CALC_BEFORE)
    for method in unit.classes[0].methods:
        for stmt in method.body:
            first_line = stmt.raw.splitlines()[0].strip()
            assert first_line in unit.text


# ---------------------------------------------------------------------------
# parse_tree
# ---------------------------------------------------------------------------

def test_parse_tree_covers_all_files(tmp_path):
    helpers.write_tree(str(tmp_path), {
        "src/a/A.java": "package a;\n\npublic class A {\n}\n",
        "src/b/B.java": "package b;\n\npublic class B {\n}\n",
        "README.md": "notes\n",
    })
    units, structure = parse_tree(str(tmp_path))
    assert sorted(u.path for u in units) == ["src/a/A.java", "src/b/B.java"]
    paths = structure.paths()
    assert "src/a/A.java" in paths and "README.md" in paths
    assert structure.render().startswith(tmp_path.name + "/")


def test_parse_tree_strict_raises_on_bad_file(tmp_path):
    helpers.write_tree(str(tmp_path), {"Bad.java": "class Bad { void f( {\n"})
    with pytest.raises(ParseError):
        parse_tree(str(tmp_path))


def test_parse_tree_lenient_records_diagnostic(tmp_path, capsys):
    helpers.write_tree(str(tmp_path), {
        "Bad.java": "class Bad { void f( {\n",
        "Good.java": "class Good {\n}\n",
    })
    tree = parse_tree(str(tmp_path), strict=False)
    assert [u.path for u in tree.units] == ["Good.java"]
    assert any(d.level == "ERROR" for d in tree.diagnostics)
    err = capsys.readouterr().err
    assert "ERROR" in err and "Bad.java" in err


def test_file_content_roundtrip_and_missing(tmp_path):
    helpers.write_tree(str(tmp_path), {"A.java": "class A {\n}\n"})
    _, structure = parse_tree(str(tmp_path))
    assert file_content(structure, "A.java") == "class A {\n}\n"
    with pytest.raises(SourceLookupError):
        file_content(structure, "missing/Z.java")


# ---------------------------------------------------------------------------
# Class and method text queries
# ---------------------------------------------------------------------------

def test_class_content_equals_span_slice():
    unit = parse_source("Calc.java", helpers.CALC_BEFORE)
    text = class_content([unit], "app.Calc")
    assert text.startswith("public class Calc {")
    assert text.rstrip().endswith("}")
    start, end = unit.classes[0].span
    assert text == "\n".join(unit.text.splitlines()[start - 1:end])


def test_method_text_and_resolution():
    unit = parse_source("Calc.java", helpers.CALC_BEFORE)
    ref = MethodRef("app.Calc", "sum", 1)
    text = method_text([unit], ref)
    assert text.lstrip().startswith("public int sum(int[] xs) {")
    assert resolve_method([unit], ref).name == "sum"
    with pytest.raises(SourceLookupError):
        resolve_method([unit], MethodRef("app.Calc", "sum", 2))


def test_method_ref_roundtrip():
    ref = MethodRef("app.Calc", "sum", 1)
    assert str(ref) == "app.Calc.sum/1"
    assert MethodRef.from_dict(ref.to_dict()) == ref


# ---------------------------------------------------------------------------
# Call graph
# ---------------------------------------------------------------------------

def test_call_graph_local_call():
    unit = parse_source("A.java", """package p;

public class A {
    public void f() {
        g();
    }

    public void g() {
        int x = 1;
    }
}
""")
    graph = build_call_graph([unit])
    assert (MethodRef("p.A", "f", 0), MethodRef("p.A", "g", 0)) in graph.edges


def test_call_graph_cross_class_qualified():
    a = parse_source("A.java", """package p;

public class A {
    public void f() {
        B.h(1, 2);
    }
}
""")
    b = parse_source("B.java", """package p;

public class B {
    public static void h(int x, int y) {
        int z = x + y;
    }
}
""")
    graph = build_call_graph([a, b])
    assert (MethodRef("p.A", "f", 0), MethodRef("p.B", "h", 2)) in graph.edges


def test_call_graph_no_invocations():
    unit = parse_source("A.java", """package p;

public class A {
    public void f() {
        int x = 1;
    }
}
""")
    graph = build_call_graph([unit])
    assert graph.edges == set()


def test_call_graph_keywords_and_new_filtered():
    unit = parse_source("A.java", """package p;

public class A {
    public void f() {
        if (true) {
            Object o = new Object();
        }
        while (false) {
            int y = 2;
        }
    }
}
""")
    graph = build_call_graph([unit])
    assert graph.edges == set()


def test_call_graph_ambiguous_unqualified_omitted():
    a = parse_source("A.java", """package p;

public class A {
    public void f() {
        run(3);
    }
}
""")
    b = parse_source("B.java", """package p;

public class B {
    public void run(int n) {
        int x = n;
    }
}
""")
    c = parse_source("C.java", """package p;

public class C {
    public void run(int n) {
        int y = n;
    }
}
""")
    graph = build_call_graph([a, b, c])
    assert graph.edges == set()
    assert any(d.level == "WARN" for d in graph.diagnostics)


def test_call_graph_local_beats_project_wide():
    a = parse_source("A.java", """package p;

public class A {
    public void f() {
        run(3);
    }

    public void run(int n) {
        int x = n;
    }
}
""")
    b = parse_source("B.java", """package p;

public class B {
    public void run(int n) {
        int y = n;
    }
}
""")
    graph = build_call_graph([a, b])
    assert (MethodRef("p.A", "f", 0), MethodRef("p.A", "run", 1)) in graph.edges
    assert (MethodRef("p.A", "f", 0), MethodRef("p.B", "run", 1)) not in graph.edges


def test_direct_callers_and_callees_sorted():
    unit = parse_source("A.java", """package p;

public class A {
    public void f() {
        c();
        b();
        a();
    }

    public void a() {
        int x = 1;
    }

    public void b() {
        int x = 2;
    }

    public void c() {
        int x = 3;
    }

    public void g() {
        f();
    }
}
""")
    graph = build_call_graph([unit])
    f = MethodRef("p.A", "f", 0)
    assert [r.name for r in direct_callees(graph, f)] == ["a", "b", "c"]
    assert [r.name for r in direct_callers(graph, f)] == ["g"]


def test_direct_callers_unknown_method_errors():
    graph = CallGraph(edges=set(), methods=set())
    with pytest.raises(SourceLookupError):
        direct_callers(graph, MethodRef("p.A", "missing", 0))


def test_call_graph_fixture_edges_exact():
    units = [parse_source("Calc.java", helpers.CALC_BEFORE)]
    graph = build_call_graph(units)
    assert graph.edges == {
        (MethodRef("app.Calc", "sum", 1), MethodRef("app.Calc", "log", 0)),
    }
