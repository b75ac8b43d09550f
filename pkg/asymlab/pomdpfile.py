"""Read and write the plain-text POMDP file format.

The supported subset::

    # comments run to the end of the line
    discount: 0.9
    values: reward
    states: 2                  (a count, or a list of names)
    actions: g b
    observations: g b
    start: 0.5 0.5             (or: start: uniform)
    T: <a> : <s> : <s'> <prob>
    O: <a> : <s'> : <o> <prob>
    O0: <s> : <o> <prob>
    R: <a> : <s> : * : * <reward>

Indices may be given as integers or names, ``*`` stands for all indices
in T, O and O0 entries. ``O`` is conditioned on (a, s') only. ``O0`` lines
describe the optional observation emitted before the first action. Names
must not coincide with a directive keyword. Whitespace, including line
breaks inside an entry, is insignificant.
"""
import logging
import re

import numpy as np

from .errors import PomdpSemanticError, PomdpSyntaxError
from .pomdp import DISTRIBUTION_TOLERANCE, NO_TERMINALS, Pomdp

log = logging.getLogger(__name__)

KEYWORDS = (
    "discount",
    "values",
    "states",
    "actions",
    "observations",
    "start",
    "T",
    "O",
    "O0",
    "R",
)
WILDCARD = "*"

_TOKEN = re.compile(r":|[^\s:]+")


class _Token:
    def __init__(self, text, line, column):
        self.text = text
        self.line = line
        self.column = column

    def error(self, message):
        return PomdpSyntaxError(message, self.line, self.column)


def _tokenize(text):
    tokens = []
    for number, line in enumerate(text.splitlines(), start=1):
        line = line.split("#", 1)[0]
        for match in _TOKEN.finditer(line):
            tokens.append(_Token(match.group(), number, match.start() + 1))
    return tokens


def _directives(tokens):
    """Split the token stream into (keyword token, argument tokens)."""

    def starts_directive(i):
        return (
            tokens[i].text in KEYWORDS
            and i + 1 < len(tokens)
            and tokens[i + 1].text == ":"
        )

    i = 0
    while i < len(tokens):
        if not starts_directive(i):
            raise tokens[i].error(
                f"Expected a directive, got '{tokens[i].text}'"
            )
        j = i + 2
        while j < len(tokens) and not starts_directive(j):
            j += 1
        yield tokens[i], tokens[i + 2 : j]
        i = j


def _groups(keyword, args, count):
    """Split entry arguments at ':' into ``count`` non-empty groups."""
    groups = [[]]
    for token in args:
        if token.text == ":":
            groups.append([])
        else:
            groups[-1].append(token)
    if len(groups) != count or any(not group for group in groups):
        anchor = args[-1] if args else keyword
        raise anchor.error(
            f"Malformed {keyword.text} entry, expected {count} "
            "':'-separated fields"
        )
    return groups


def _number(token):
    try:
        return float(token.text)
    except ValueError:
        raise token.error(f"Expected a number, got '{token.text}'") from None


class _Parser:
    def __init__(self):
        self.gamma = None
        self.names = {}
        self.sizes = {}
        self.start = None
        self.transition = None
        self.observation = None
        self.initial_observation = None
        self.reward = None

    def parse(self, text):
        for keyword, args in _directives(_tokenize(text)):
            getattr(self, f"_on_{keyword.text.lower()}")(keyword, args)
        return self

    def _single(self, keyword, args):
        if len(args) != 1:
            anchor = args[1] if len(args) > 1 else keyword
            raise anchor.error(f"{keyword.text} takes exactly one value")
        return args[0]

    def _on_discount(self, keyword, args):
        self.gamma = _number(self._single(keyword, args))

    def _on_values(self, keyword, args):
        token = self._single(keyword, args)
        if token.text != "reward":
            raise token.error("Only 'values: reward' is supported")

    def _declare(self, kind, keyword, args):
        if not args:
            raise keyword.error(f"{keyword.text} needs a count or names")
        if len(args) == 1 and args[0].text.isdigit():
            size = int(args[0].text)
            names = [str(i) for i in range(size)]
        else:
            names = [token.text for token in args]
            size = len(names)
        if size < 1:
            raise args[0].error(f"{keyword.text} must not be empty")
        self.sizes[kind] = size
        self.names[kind] = names
        if len(self.sizes) == 3:
            n_s, n_a, n_o = (
                self.sizes[k] for k in ("states", "actions", "observations")
            )
            self.transition = np.zeros((n_a, n_s, n_s))
            self.observation = np.zeros((n_a, n_s, n_o))
            self.reward = np.zeros((n_a, n_s))

    def _on_states(self, keyword, args):
        self._declare("states", keyword, args)

    def _on_actions(self, keyword, args):
        self._declare("actions", keyword, args)

    def _on_observations(self, keyword, args):
        self._declare("observations", keyword, args)

    def _require_declarations(self, keyword):
        if len(self.sizes) != 3:
            raise keyword.error(
                f"{keyword.text} before states, actions and observations "
                "were declared"
            )

    def _on_start(self, keyword, args):
        if "states" not in self.sizes:
            raise keyword.error("start before states were declared")
        n_s = self.sizes["states"]
        if len(args) == 1 and args[0].text == "uniform":
            self.start = np.full(n_s, 1.0 / n_s)
            return
        if len(args) != n_s:
            anchor = args[n_s] if len(args) > n_s else keyword
            raise anchor.error(f"start needs {n_s} probabilities")
        self.start = np.array([_number(token) for token in args])

    def _index(self, kind, token):
        """Indices addressed by a token, all of them for the wildcard."""
        if token.text == WILDCARD:
            return slice(None)
        names = self.names[kind]
        if token.text in names:
            return names.index(token.text)
        if token.text.isdigit() and int(token.text) < len(names):
            return int(token.text)
        raise token.error(f"Unknown {kind[:-1]} '{token.text}'")

    def _value_group(self, kind, group):
        if len(group) != 2:
            anchor = group[2] if len(group) > 2 else group[-1]
            raise anchor.error(f"Expected a {kind[:-1]} and a value")
        return self._index(kind, group[0]), _number(group[1])

    def _on_t(self, keyword, args):
        self._require_declarations(keyword)
        a, s, rest = _groups(keyword, args, 3)
        next_s, prob = self._value_group("states", rest)
        self.transition[
            self._index("actions", self._one(a)),
            self._index("states", self._one(s)),
            next_s,
        ] = prob

    def _on_o(self, keyword, args):
        self._require_declarations(keyword)
        a, next_s, rest = _groups(keyword, args, 3)
        obs, prob = self._value_group("observations", rest)
        self.observation[
            self._index("actions", self._one(a)),
            self._index("states", self._one(next_s)),
            obs,
        ] = prob

    def _on_o0(self, keyword, args):
        self._require_declarations(keyword)
        s, rest = _groups(keyword, args, 2)
        obs, prob = self._value_group("observations", rest)
        if self.initial_observation is None:
            self.initial_observation = np.zeros(
                (self.sizes["states"], self.sizes["observations"])
            )
        self.initial_observation[self._index("states", self._one(s)), obs] = (
            prob
        )

    def _on_r(self, keyword, args):
        self._require_declarations(keyword)
        a, s, next_s, rest = _groups(keyword, args, 4)
        for token in (self._one(next_s), rest[0]):
            if token.text != WILDCARD:
                raise PomdpSemanticError(
                    "Rewards depending on the next state or observation are "
                    f"not supported (line {token.line})",
                    "R",
                    (a[0].text, s[0].text),
                )
        if len(rest) != 2:
            anchor = rest[2] if len(rest) > 2 else rest[0]
            raise anchor.error("Expected '*' and a reward")
        self.reward[
            self._index("actions", self._one(a)),
            self._index("states", self._one(s)),
        ] = _number(rest[1])

    @staticmethod
    def _one(group):
        if len(group) != 1:
            raise group[1].error(f"Unexpected token '{group[1].text}'")
        return group[0]

    def build(self, name):
        if self.gamma is None:
            raise PomdpSemanticError("Missing discount", "discount")
        if not 0.0 <= self.gamma < 1.0:
            raise PomdpSemanticError(
                f"Discount {self.gamma} not in [0, 1)", "discount"
            )
        if len(self.sizes) != 3:
            missing = sorted(
                {"states", "actions", "observations"} - set(self.sizes)
            )
            raise PomdpSemanticError(
                f"Missing declarations: {', '.join(missing)}", "declarations"
            )
        if self.start is None:
            raise PomdpSemanticError("Missing start distribution", "start")
        _check_rows("start", self.start[np.newaxis], ())
        _check_rows("T", self.transition, ("a", "s"))
        _check_rows("O", self.observation, ("a", "s'"))
        if self.initial_observation is not None:
            _check_rows("O0", self.initial_observation, ("s",))
        return Pomdp(
            transition=self.transition.transpose(1, 0, 2),
            observation=self.observation,
            reward=self.reward.T,
            gamma=self.gamma,
            initial=self.start,
            initial_observation=self.initial_observation,
            labels=self.names,
            name=name,
        )


def _check_rows(table, array, axes):
    sums = array.sum(axis=-1)
    bad = (np.abs(sums - 1.0) > DISTRIBUTION_TOLERANCE) | np.any(
        array < 0.0, axis=-1
    )
    if np.any(bad):
        index = tuple(int(i) for i in np.argwhere(bad)[0])
        coordinates = tuple(zip(axes, index)) if axes else ()
        raise PomdpSemanticError(
            f"Row sums to {float(sums[index]):.12g} or has negative mass",
            table,
            coordinates,
        )


def load_pomdp_file(text, name="pomdp-file"):
    """Parse the text of a POMDP file.

    Args:
        text (str): The file content.
        name (str): The name given to the resulting Pomdp.

    Returns:
        (Pomdp, TerminalSpec): The POMDP; the format has no terminals.

    Raises:
        PomdpSyntaxError: Malformed input, with line and column.
        PomdpSemanticError: Well-formed input violating a POMDP invariant,
            naming the table and its coordinates.
    """
    pomdp = _Parser().parse(text).build(name)
    log.debug("Parsed %r", pomdp)
    return pomdp, NO_TERMINALS


def load_pomdp_path(path):
    """Parse a POMDP file from disk, named after the file."""
    with open(path, encoding="utf-8") as stream:
        text = stream.read()
    return load_pomdp_file(text, name=str(path).rsplit("/", 1)[-1])


def _names(pomdp, kind, count):
    names = pomdp.labels.get(kind)
    usable = (
        names
        and len(names) == count
        and len(set(names)) == count
        and all(
            _TOKEN.fullmatch(name)
            and name not in KEYWORDS
            and name != WILDCARD
            and not name.isdigit()
            and "#" not in name
            for name in names
        )
    )
    return list(names) if usable else [str(i) for i in range(count)]


def dump_pomdp_file(pomdp):
    """Serialize a POMDP whose observations depend on (a, s') only.

    Floats are written with ``repr`` so that loading the result reproduces
    every table bit for bit.

    Raises:
        PomdpSemanticError: If O depends on the previous state.
    """
    table = pomdp.observation_table
    if not np.all(table == table[:1]):
        raise PomdpSemanticError(
            "The file format cannot express observations depending on the "
            "previous state",
            "O",
        )
    states = _names(pomdp, "states", pomdp.n_states)
    actions = _names(pomdp, "actions", pomdp.n_actions)
    observations = _names(pomdp, "observations", pomdp.n_obs)

    def declaration(names):
        if names == [str(i) for i in range(len(names))]:
            return str(len(names))
        return " ".join(names)

    lines = [
        f"# {pomdp.name}",
        f"discount: {pomdp.gamma!r}",
        "values: reward",
        f"states: {declaration(states)}",
        f"actions: {declaration(actions)}",
        f"observations: {declaration(observations)}",
        "start: " + " ".join(repr(float(p)) for p in pomdp.initial),
    ]
    for s, a, next_s in zip(*np.nonzero(pomdp.transition)):
        prob = float(pomdp.transition[s, a, next_s])
        lines.append(
            f"T: {actions[a]} : {states[s]} : {states[next_s]} {prob!r}"
        )
    observation = pomdp.observation[0]
    for a, next_s, obs in zip(*np.nonzero(observation)):
        prob = float(observation[a, next_s, obs])
        lines.append(
            f"O: {actions[a]} : {states[next_s]} : {observations[obs]} "
            f"{prob!r}"
        )
    if pomdp.initial_observation is not None:
        for s, obs in zip(*np.nonzero(pomdp.initial_observation)):
            prob = float(pomdp.initial_observation[s, obs])
            lines.append(f"O0: {states[s]} : {observations[obs]} {prob!r}")
    for s, a in zip(*np.nonzero(pomdp.reward)):
        value = float(pomdp.reward[s, a])
        lines.append(f"R: {actions[a]} : {states[s]} : * : * {value!r}")
    return "\n".join(lines) + "\n"
