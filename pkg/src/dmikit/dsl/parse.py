"""Lexer, recursive-descent parser, and canonical printer for the DSL.

The concrete grammar is documented in docs/grammar.md. Both action shapes
are accepted: a header role list with a single body, and the split form
with one ``by`` body per role. ``→`` and ``->`` are interchangeable, as
are ``∧``/``and``, ``∨``/``or``, ``¬``/``not``. ``--`` starts a comment.
"""

from __future__ import annotations

from dataclasses import dataclass

from ..errors import DslSyntaxError
from . import ast

KEYWORDS = {
    "class", "is", "end", "state", "exceptions", "action", "when", "do",
    "by", "assert", "handling", "for", "if", "then", "else",
}

_SYMBOLS = ("::", "->", ";", ",", ":", ".", "(", ")", "*")
_WORDSYMS = {"→": "->", "∧": "and", "∨": "or", "¬": "not"}


@dataclass(frozen=True)
class Token:
    kind: str            # "name", "kw", "sym", "eof"
    text: str
    line: int
    col: int


def tokenize(src: str) -> list[Token]:
    tokens: list[Token] = []
    line, col, i = 1, 1, 0
    n = len(src)
    while i < n:
        c = src[i]
        if c == "\n":
            line += 1
            col = 1
            i += 1
            continue
        if c.isspace():
            i += 1
            col += 1
            continue
        if src.startswith("--", i):
            while i < n and src[i] != "\n":
                i += 1
            continue
        if c in _WORDSYMS:
            text = _WORDSYMS[c]
            kind = "sym" if text == "->" else "kw"
            tokens.append(Token(kind, text, line, col))
            i += 1
            col += 1
            continue
        if src.startswith("post-condition", i):
            tokens.append(Token("name", "post-condition", line, col))
            i += len("post-condition")
            col += len("post-condition")
            continue
        matched = False
        for sym in _SYMBOLS:
            if src.startswith(sym, i):
                tokens.append(Token("sym", sym, line, col))
                i += len(sym)
                col += len(sym)
                matched = True
                break
        if matched:
            continue
        if c.isalpha() or c == "_":
            j = i
            while j < n and (src[j].isalnum() or src[j] == "_"):
                j += 1
            word = src[i:j]
            if word in ("and", "or", "not"):
                tokens.append(Token("kw", word, line, col))
            elif word in KEYWORDS:
                tokens.append(Token("kw", word, line, col))
            else:
                tokens.append(Token("name", word, line, col))
            col += j - i
            i = j
            continue
        raise DslSyntaxError(f"unexpected character {c!r}", line, col)
    tokens.append(Token("eof", "", line, col))
    return tokens


class Parser:
    def __init__(self, src: str, source_name: str = "<string>"):
        self.tokens = tokenize(src)
        self.pos = 0
        self.source_name = source_name

    # -- token plumbing ---------------------------------------------------

    def peek(self, ahead: int = 0) -> Token:
        return self.tokens[min(self.pos + ahead, len(self.tokens) - 1)]

    def next(self) -> Token:
        tok = self.tokens[self.pos]
        if tok.kind != "eof":
            self.pos += 1
        return tok

    def at(self, kind: str, text: str | None = None) -> bool:
        tok = self.peek()
        return tok.kind == kind and (text is None or tok.text == text)

    def expect(self, kind: str, text: str | None = None) -> Token:
        tok = self.peek()
        if not self.at(kind, text):
            want = text or kind
            raise DslSyntaxError(f"expected {want!r}, found {tok.text!r}",
                                 tok.line, tok.col)
        return self.next()

    def accept(self, kind: str, text: str | None = None) -> Token | None:
        if self.at(kind, text):
            return self.next()
        return None

    def loc(self) -> ast.Loc:
        tok = self.peek()
        return ast.Loc(tok.line, tok.col)

    # -- entry -----------------------------------------------------------------

    def parse_spec(self) -> ast.Spec:
        decls = []
        while not self.at("eof"):
            decls.append(self.parse_decl())
        return ast.Spec(decls=tuple(decls), source_name=self.source_name)

    def parse_decl(self):
        if self.at("kw", "class"):
            return self.parse_class()
        if self.at("kw", "action"):
            return self.parse_action()
        if self.at("kw", "handling"):
            return self.parse_handling()
        if self.at("kw", "exceptions"):
            loc = self.loc()
            self.next()
            items = self.parse_exc_items()
            self.expect("sym", ";")
            return ast.ExceptionsDecl(items=tuple(items), loc=loc)
        if self.at("name"):
            return self.parse_object_decl()
        tok = self.peek()
        raise DslSyntaxError(f"expected a declaration, found {tok.text!r}",
                             tok.line, tok.col)

    # -- classes --------------------------------------------------------------------

    def parse_class(self) -> ast.ClassDecl:
        loc = self.loc()
        self.expect("kw", "class")
        name = self.expect("name").text
        self.expect("kw", "is")
        members = []
        while not self.at("kw", "end"):
            if self.at("kw", "state"):
                members.append(self.parse_state_group())
            elif self.at("kw", "exceptions"):
                eloc = self.loc()
                self.next()
                items = self.parse_exc_items()
                self.expect("sym", ";")
                members.append(ast.ExceptionsDecl(items=tuple(items), loc=eloc))
            elif self.at("name"):
                members.append(self.parse_component())
            else:
                tok = self.peek()
                raise DslSyntaxError(f"expected a class member, found {tok.text!r}",
                                     tok.line, tok.col)
        self.expect("kw", "end")
        self.expect("sym", ";")
        groups = tuple(m for m in members if isinstance(m, ast.StateGroupDecl))
        excs = tuple(i for m in members if isinstance(m, ast.ExceptionsDecl)
                     for i in m.items)
        comps = tuple(m for m in members if isinstance(m, ast.ComponentDecl))
        return ast.ClassDecl(name=name, groups=groups, exceptions=excs,
                             components=comps, members=tuple(members), loc=loc)

    def parse_state_group(self) -> ast.StateGroupDecl:
        loc = self.loc()
        self.expect("kw", "state")
        states, initials = [], []
        while True:
            star = self.accept("sym", "*")
            name = self.expect("name").text
            states.append(name)
            if star:
                initials.append(name)
            if not self.accept("sym", ","):
                break
        self.expect("sym", ";")
        return ast.StateGroupDecl(states=tuple(states), initials=tuple(initials),
                                  loc=loc)

    def parse_exc_items(self) -> list[ast.ExcDecl]:
        items = []
        while True:
            loc = self.loc()
            name = self.expect("name").text
            parent = None
            if self.accept("sym", "::"):
                parent = self.parse_path()
            items.append(ast.ExcDecl(name=name, parent=parent, loc=loc))
            if not self.accept("sym", ","):
                break
        return items

    def parse_component(self) -> ast.ComponentDecl:
        loc = self.loc()
        names = [self.expect("name").text]
        while self.accept("sym", ","):
            names.append(self.expect("name").text)
        self.expect("sym", ":")
        cls = self.expect("name").text
        self.expect("sym", ";")
        return ast.ComponentDecl(names=tuple(names), class_name=cls, loc=loc)

    def parse_object_decl(self) -> ast.ObjectDecl:
        comp = self.parse_component()
        return ast.ObjectDecl(names=comp.names, class_name=comp.class_name,
                              loc=comp.loc)

    # -- actions -----------------------------------------------------------------------

    def parse_role_binder(self) -> tuple[str, str]:
        role = self.expect("name").text
        self.expect("sym", ":")
        cls = self.expect("name").text
        return role, cls

    def parse_action(self) -> ast.ActionDecl:
        loc = self.loc()
        self.expect("kw", "action")
        name = self.expect("name").text
        header: list[tuple[str, str]] = []
        if self.accept("kw", "by"):
            header.append(self.parse_role_binder())
            while self.accept("sym", ";"):
                if self.at("kw", "is"):
                    break
                header.append(self.parse_role_binder())
        self.expect("kw", "is")
        self.expect("kw", "when")
        when = self.parse_predicate()
        self.expect("kw", "do")
        split = self.at("kw", "by")
        by_clauses: list[ast.ByClause] = []
        body: tuple = ()
        if split:
            while self.at("kw", "by"):
                by_clauses.append(self.parse_by_clause())
        else:
            body = self.parse_steps()
        assert_clause = self.parse_assert_opt()
        self.expect("kw", "end")
        self.expect("sym", ";")
        roles = tuple(header) if header else tuple(
            (b.role, b.class_name) for b in by_clauses)
        return ast.ActionDecl(name=name, roles=roles, when=when, split=split,
                              by_clauses=tuple(by_clauses), body=body,
                              assert_clause=assert_clause, loc=loc)

    def parse_by_clause(self) -> ast.ByClause:
        loc = self.loc()
        self.expect("kw", "by")
        role, cls = self.parse_role_binder()
        self.accept("sym", ";")
        steps = self.parse_steps()
        return ast.ByClause(role=role, class_name=cls, steps=steps, loc=loc)

    def parse_steps(self) -> tuple:
        steps = []
        while True:
            if self.at("sym", "->"):
                loc = self.loc()
                self.next()
                target = self.parse_path()
                attached = None
                if self.accept("sym", "::"):
                    attached = self.parse_path()
                self.expect("sym", ";")
                steps.append(ast.TransitionStmt(target=target, attached=attached,
                                                loc=loc))
            elif self.at("kw", "if"):
                steps.append(self.parse_if())
            else:
                break
        return tuple(steps)

    def parse_if(self) -> ast.IfStmt:
        loc = self.loc()
        self.expect("kw", "if")
        cond = self.parse_predicate()
        self.expect("kw", "then")
        then_steps = self.parse_steps()
        else_steps: tuple = ()
        if self.accept("kw", "else"):
            else_steps = self.parse_steps()
        self.expect("kw", "end")
        self.accept("sym", ";")
        return ast.IfStmt(cond=cond, then_steps=then_steps,
                          else_steps=else_steps, loc=loc)

    def parse_assert_opt(self) -> ast.AssertClause | None:
        if not self.at("kw", "assert"):
            return None
        loc = self.loc()
        self.next()
        pred = self.parse_predicate()
        attached = None
        if self.accept("sym", "::"):
            attached = self.parse_path()
        self.accept("sym", ";")
        return ast.AssertClause(predicate=pred, attached=attached, loc=loc)

    def parse_handling(self) -> ast.HandlingDecl:
        loc = self.loc()
        self.expect("kw", "handling")
        self.expect("kw", "action")
        name = self.expect("name").text
        for_ref = None
        if self.accept("kw", "for"):
            for_ref = self.parse_path()
        self.expect("kw", "is")
        by_clauses = []
        while self.at("kw", "by"):
            by_clauses.append(self.parse_by_clause())
        self.expect("kw", "end")
        self.expect("sym", ";")
        return ast.HandlingDecl(action_name=name, for_ref=for_ref,
                                by_clauses=tuple(by_clauses), loc=loc)

    # -- predicates -----------------------------------------------------------------------

    def parse_predicate(self):
        return self.parse_or()

    def parse_or(self):
        loc = self.loc()
        terms = [self.parse_and()]
        while self.accept("kw", "or"):
            terms.append(self.parse_and())
        if len(terms) == 1:
            return terms[0]
        return ast.PredOr(terms=tuple(terms), loc=loc)

    def parse_and(self):
        loc = self.loc()
        terms = [self.parse_unary()]
        while self.accept("kw", "and"):
            terms.append(self.parse_unary())
        if len(terms) == 1:
            return terms[0]
        return ast.PredAnd(terms=tuple(terms), loc=loc)

    def parse_unary(self):
        loc = self.loc()
        if self.accept("kw", "not"):
            return ast.PredNot(inner=self.parse_unary(), loc=loc)
        if self.accept("sym", "("):
            inner = self.parse_predicate()
            self.expect("sym", ")")
            return inner
        return ast.PredAtom(path=self.parse_path(), loc=loc)

    def parse_path(self) -> ast.Path:
        loc = self.loc()
        parts = [self.expect("name").text]
        while self.accept("sym", "."):
            parts.append(self.expect("name").text)
        return ast.Path(parts=tuple(parts), loc=loc)


def parse(src: str, source_name: str = "<string>") -> ast.Spec:
    return Parser(src, source_name).parse_spec()


# -- printer ----------------------------------------------------------------------------------

def _print_pred(pred, parent: str = "or") -> str:
    if isinstance(pred, ast.PredAtom):
        return str(pred.path)
    if isinstance(pred, ast.PredNot):
        return "not " + _print_pred(pred.inner, "not")
    if isinstance(pred, ast.PredAnd):
        text = " and ".join(_print_pred(t, "and") for t in pred.terms)
        return f"({text})" if parent == "not" else text
    if isinstance(pred, ast.PredOr):
        text = " or ".join(_print_pred(t, "or") for t in pred.terms)
        return f"({text})" if parent in ("and", "not") else text
    raise TypeError(pred)


def _print_steps(steps, indent: str) -> list[str]:
    out = []
    for s in steps:
        if isinstance(s, ast.TransitionStmt):
            ann = f" :: {s.attached}" if s.attached else ""
            out.append(f"{indent}-> {s.target}{ann};")
        elif isinstance(s, ast.IfStmt):
            out.append(f"{indent}if {_print_pred(s.cond)} then")
            out.extend(_print_steps(s.then_steps, indent + "  "))
            if s.else_steps:
                out.append(f"{indent}else")
                out.extend(_print_steps(s.else_steps, indent + "  "))
            out.append(f"{indent}end;")
    return out


def _print_exc_items(items) -> str:
    parts = []
    for i in items:
        parts.append(f"{i.name} :: {i.parent}" if i.parent else i.name)
    return ", ".join(parts)


def print_spec(spec: ast.Spec) -> str:
    lines: list[str] = []
    for d in spec.decls:
        if isinstance(d, ast.ClassDecl):
            lines.append(f"class {d.name} is")
            for m in d.members:
                if isinstance(m, ast.StateGroupDecl):
                    items = ", ".join(("*" if s in m.initials else "") + s
                                      for s in m.states)
                    lines.append(f"  state {items};")
                elif isinstance(m, ast.ExceptionsDecl):
                    lines.append(f"  exceptions {_print_exc_items(m.items)};")
                elif isinstance(m, ast.ComponentDecl):
                    lines.append(f"  {', '.join(m.names)}: {m.class_name};")
            lines.append("end;")
        elif isinstance(d, ast.ExceptionsDecl):
            lines.append(f"exceptions {_print_exc_items(d.items)};")
        elif isinstance(d, ast.ObjectDecl):
            lines.append(f"{', '.join(d.names)}: {d.class_name};")
        elif isinstance(d, ast.ActionDecl):
            if d.split:
                lines.append(f"action {d.name} is")
            else:
                roles = "; ".join(f"{r}:{c}" for r, c in d.roles)
                lines.append(f"action {d.name} by {roles} is")
            lines.append(f"when {_print_pred(d.when)} do")
            if d.split:
                for b in d.by_clauses:
                    lines.append(f"by {b.role}:{b.class_name};")
                    lines.extend(_print_steps(b.steps, "  "))
            else:
                lines.extend(_print_steps(d.body, "  "))
            if d.assert_clause is not None:
                a = d.assert_clause
                ann = f" :: {a.attached}" if a.attached else ""
                lines.append(f"assert {_print_pred(a.predicate)}{ann}")
            lines.append("end;")
        elif isinstance(d, ast.HandlingDecl):
            for_part = f" for {d.for_ref}" if d.for_ref else ""
            lines.append(f"handling action {d.action_name}{for_part} is")
            for b in d.by_clauses:
                lines.append(f"by {b.role}:{b.class_name};")
                lines.extend(_print_steps(b.steps, "  "))
            lines.append("end;")
        lines.append("")
    return "\n".join(lines).rstrip() + "\n"
