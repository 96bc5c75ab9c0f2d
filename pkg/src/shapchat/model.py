"""Tree-ensemble regression model, its schema, and its on-disk formats.

The model is an additive ensemble of axis-aligned decision trees over a mixed
numeric/categorical feature schema: ``prediction = base_score + sum of the
leaf reached in each tree``. Trees are stored as flat node arrays with the
root at index 0 and child indices strictly greater than their parent, so a
valid document can never encode a cycle.

Two documented serialization formats live here:

* model document: JSON, see :func:`load_ensemble` / :func:`save_ensemble`
* data table: CSV with a header row matching the schema feature names and
  an optional final target column
"""

from __future__ import annotations

import csv
import io
import json
import math
from dataclasses import dataclass, field
from functools import cached_property
from typing import Iterable, Sequence, Union

import numpy as np

from .errors import ModelFormatError, RowValidationError, SchemaError

NUMERIC = "numeric"
CATEGORICAL = "categorical"

#: A single observation: one value per schema feature, in schema order.
#: Numeric features hold real numbers, categorical features hold labels.
DataRow = Sequence[object]


@dataclass(frozen=True)
class Feature:
    name: str
    kind: str
    categories: tuple[str, ...] | None = None

    def __post_init__(self):
        if not self.name:
            raise SchemaError("feature name must be non-empty")
        if self.kind not in (NUMERIC, CATEGORICAL):
            raise SchemaError(f"feature {self.name!r}: unknown kind {self.kind!r}")
        if self.kind == CATEGORICAL:
            if not self.categories:
                raise SchemaError(f"feature {self.name!r}: categorical features need >= 1 category")
            if len(set(self.categories)) != len(self.categories):
                raise SchemaError(f"feature {self.name!r}: duplicate categories")
        elif self.categories is not None:
            raise SchemaError(f"feature {self.name!r}: numeric features take no categories")


@dataclass(frozen=True)
class FeatureSchema:
    """Ordered feature definitions; the order is the canonical feature index
    order used by rows, trees, attributions, and prompts alike."""

    features: tuple[Feature, ...]
    target_name: str = "target"

    def __post_init__(self):
        names = [f.name for f in self.features]
        if len(set(names)) != len(names):
            raise SchemaError("feature names must be unique")

    def __len__(self) -> int:
        return len(self.features)

    @property
    def names(self) -> tuple[str, ...]:
        return tuple(f.name for f in self.features)

    def index_of(self, name: str) -> int:
        for i, f in enumerate(self.features):
            if f.name == name:
                return i
        raise SchemaError(f"unknown feature {name!r}")

    @cached_property
    def _category_codes(self) -> dict[int, dict[str, int]]:
        return {
            i: {c: j for j, c in enumerate(f.categories)}
            for i, f in enumerate(self.features)
            if f.kind == CATEGORICAL
        }

    def validate_row(self, row: DataRow) -> None:
        """Raise RowValidationError naming every offending feature."""
        if len(row) != len(self.features):
            raise RowValidationError(
                f"row has {len(row)} values, schema has {len(self.features)} features"
            )
        bad: list[str] = []
        for f, value in zip(self.features, row):
            if f.kind == NUMERIC:
                ok = (
                    isinstance(value, (int, float))
                    and not isinstance(value, bool)
                    and math.isfinite(value)
                )
            else:
                ok = isinstance(value, str) and value in f.categories
            if not ok:
                bad.append(f.name)
        if bad:
            raise RowValidationError(
                "invalid value for feature(s): " + ", ".join(bad), fields=bad
            )

    def encode_row(self, row: DataRow) -> np.ndarray:
        """Validated row -> float vector (categories become their code)."""
        self.validate_row(row)
        codes = self._category_codes
        return np.array(
            [codes[i][v] if i in codes else float(v) for i, v in enumerate(row)],
            dtype=np.float64,
        )

    def encode_rows(self, rows: Sequence[DataRow]) -> np.ndarray:
        if not rows:
            return np.empty((0, len(self.features)), dtype=np.float64)
        return np.stack([self.encode_row(r) for r in rows])

    def decode_row(self, encoded: np.ndarray) -> list[object]:
        row: list[object] = []
        for i, f in enumerate(self.features):
            if f.kind == CATEGORICAL:
                row.append(f.categories[int(encoded[i])])
            else:
                row.append(float(encoded[i]))
        return row


@dataclass(frozen=True)
class DataTable:
    schema: FeatureSchema
    rows: tuple[DataRow, ...]
    targets: tuple[float, ...] | None = None

    def __post_init__(self):
        if self.targets is not None and len(self.targets) != len(self.rows):
            raise SchemaError(
                f"{len(self.targets)} targets for {len(self.rows)} rows"
            )
        for row in self.rows:
            self.schema.validate_row(row)

    def __len__(self) -> int:
        return len(self.rows)


@dataclass(frozen=True)
class Leaf:
    value: float


@dataclass(frozen=True)
class Split:
    """Internal node. Numeric splits route ``value <= threshold`` left;
    categorical splits route ``value in categories`` left."""

    feature: int
    left: int
    right: int
    threshold: float | None = None
    categories: frozenset[str] | None = None

    def __post_init__(self):
        if (self.threshold is None) == (self.categories is None):
            raise SchemaError("split needs exactly one of threshold / categories")


TreeNode = Union[Leaf, Split]
Tree = tuple  # tuple[TreeNode, ...]


def _validate_tree(schema: FeatureSchema, nodes: Sequence[TreeNode], path: str) -> None:
    if not nodes:
        raise ModelFormatError("tree has no nodes", path)
    for i, node in enumerate(nodes):
        if isinstance(node, Leaf):
            if not math.isfinite(node.value):
                raise ModelFormatError("leaf value not finite", f"{path}[{i}].leaf")
            continue
        if not 0 <= node.feature < len(schema):
            raise ModelFormatError(
                f"feature index {node.feature} out of range", f"{path}[{i}].feature"
            )
        feat = schema.features[node.feature]
        if feat.kind == NUMERIC and node.threshold is None:
            raise ModelFormatError(
                f"numeric feature {feat.name!r} split by category set", f"{path}[{i}]"
            )
        if feat.kind == CATEGORICAL:
            if node.categories is None:
                raise ModelFormatError(
                    f"categorical feature {feat.name!r} split by threshold", f"{path}[{i}]"
                )
            unknown = node.categories - set(feat.categories)
            if unknown:
                raise ModelFormatError(
                    f"unknown categories {sorted(unknown)} for feature {feat.name!r}",
                    f"{path}[{i}].categories",
                )
        for side in ("left", "right"):
            child = getattr(node, side)
            if not isinstance(child, int) or not i < child < len(nodes):
                raise ModelFormatError(
                    f"child index {child} invalid (must be in ({i}, {len(nodes)}))",
                    f"{path}[{i}].{side}",
                )


class _CompiledTrees:
    """Flat numpy view of the ensemble for batch prediction.

    Rows are pre-encoded float vectors (categorical values as codes). Each
    categorical split carries a boolean membership table indexed by code.
    """

    def __init__(self, schema: FeatureSchema, trees: Sequence[Sequence[TreeNode]]):
        self.trees = []
        for nodes in trees:
            feature = np.zeros(len(nodes), dtype=np.int64)
            threshold = np.zeros(len(nodes), dtype=np.float64)
            left = np.zeros(len(nodes), dtype=np.int64)
            right = np.zeros(len(nodes), dtype=np.int64)
            leaf = np.zeros(len(nodes), dtype=np.float64)
            is_leaf = np.zeros(len(nodes), dtype=bool)
            member: dict[int, np.ndarray] = {}
            for i, node in enumerate(nodes):
                if isinstance(node, Leaf):
                    is_leaf[i] = True
                    leaf[i] = node.value
                    continue
                feature[i] = node.feature
                left[i] = node.left
                right[i] = node.right
                if node.categories is not None:
                    cats = schema.features[node.feature].categories
                    member[i] = np.array([c in node.categories for c in cats])
                else:
                    threshold[i] = node.threshold
            self.trees.append((feature, threshold, left, right, leaf, is_leaf, member))

    def predict(self, encoded: np.ndarray, base_score: float) -> np.ndarray:
        # accumulate base first, then tree by tree, matching the scalar
        # predict_row order so both paths agree bitwise
        n = encoded.shape[0]
        out = np.full(n, base_score, dtype=np.float64)
        for feature, threshold, left, right, leaf, is_leaf, member in self.trees:
            idx = np.zeros(n, dtype=np.int64)
            active = ~is_leaf[idx]
            while active.any():
                cur = idx[active]
                values = encoded[active, feature[cur]]
                go_left = values <= threshold[cur]
                for node_i, table in member.items():
                    at_node = cur == node_i
                    if at_node.any():
                        go_left[at_node] = table[values[at_node].astype(np.int64)]
                idx[active] = np.where(go_left, left[cur], right[cur])
                active = ~is_leaf[idx]
            out += leaf[idx]
        return out


@dataclass(frozen=True)
class TreeEnsemble:
    schema: FeatureSchema
    base_score: float
    trees: tuple[Tree, ...]
    metadata: dict[str, str] = field(default_factory=dict)

    def __post_init__(self):
        for t, nodes in enumerate(self.trees):
            _validate_tree(self.schema, nodes, f"trees[{t}]")

    @cached_property
    def _compiled(self) -> _CompiledTrees:
        return _CompiledTrees(self.schema, self.trees)

    def predict_row(self, row: DataRow) -> float:
        """base_score plus the leaf reached in each tree."""
        self.schema.validate_row(row)
        total = self.base_score
        for nodes in self.trees:
            node = nodes[0]
            while isinstance(node, Split):
                value = row[node.feature]
                if node.categories is not None:
                    go_left = value in node.categories
                else:
                    go_left = value <= node.threshold
                node = nodes[node.left if go_left else node.right]
            total += node.value
        return total

    def predict_encoded(self, encoded: np.ndarray) -> np.ndarray:
        """Batch predict over pre-encoded rows (see FeatureSchema.encode_row)."""
        return self._compiled.predict(encoded, self.base_score)

    def predict_table(self, table: DataTable) -> np.ndarray:
        return self.predict_encoded(table.schema.encode_rows(table.rows))


# --------------------------------------------------------------------------
# model document (JSON)
# --------------------------------------------------------------------------

FORMAT_VERSION = 1

_SPLIT_KEYS_NUM = {"feature", "threshold", "left", "right"}
_SPLIT_KEYS_CAT = {"feature", "categories", "left", "right"}


def _schema_to_json(schema: FeatureSchema) -> dict:
    features = []
    for f in schema.features:
        entry: dict[str, object] = {"name": f.name, "kind": f.kind}
        if f.categories is not None:
            entry["categories"] = list(f.categories)
        features.append(entry)
    return {"features": features, "target_name": schema.target_name}


def _schema_from_json(obj: object, path: str) -> FeatureSchema:
    if not isinstance(obj, dict):
        raise ModelFormatError("schema must be an object", path)
    unknown = set(obj) - {"features", "target_name"}
    if unknown:
        raise ModelFormatError(f"unknown field {sorted(unknown)[0]!r}", path)
    features = []
    raw_features = obj.get("features")
    if not isinstance(raw_features, list):
        raise ModelFormatError("features must be a list", f"{path}.features")
    for i, raw in enumerate(raw_features):
        fpath = f"{path}.features[{i}]"
        if not isinstance(raw, dict):
            raise ModelFormatError("feature must be an object", fpath)
        unknown = set(raw) - {"name", "kind", "categories"}
        if unknown:
            raise ModelFormatError(f"unknown field {sorted(unknown)[0]!r}", fpath)
        try:
            features.append(
                Feature(
                    name=raw.get("name", ""),
                    kind=raw.get("kind", ""),
                    categories=tuple(raw["categories"]) if "categories" in raw else None,
                )
            )
        except SchemaError as exc:
            raise ModelFormatError(str(exc), fpath) from exc
    try:
        return FeatureSchema(tuple(features), target_name=obj.get("target_name", "target"))
    except SchemaError as exc:
        raise ModelFormatError(str(exc), f"{path}.features") from exc


def _node_from_json(raw: object, path: str) -> TreeNode:
    if not isinstance(raw, dict):
        raise ModelFormatError("node must be an object", path)
    keys = set(raw)
    if keys == {"leaf"}:
        value = raw["leaf"]
        if not isinstance(value, (int, float)) or isinstance(value, bool):
            raise ModelFormatError("leaf must be a number", f"{path}.leaf")
        return Leaf(float(value))
    if keys == _SPLIT_KEYS_NUM or keys == _SPLIT_KEYS_CAT:
        try:
            if "threshold" in raw:
                return Split(
                    feature=raw["feature"],
                    threshold=float(raw["threshold"]),
                    left=raw["left"],
                    right=raw["right"],
                )
            return Split(
                feature=raw["feature"],
                categories=frozenset(raw["categories"]),
                left=raw["left"],
                right=raw["right"],
            )
        except (TypeError, ValueError, SchemaError) as exc:
            raise ModelFormatError(str(exc), path) from exc
    unknown = keys - (_SPLIT_KEYS_NUM | _SPLIT_KEYS_CAT | {"leaf"})
    if unknown:
        raise ModelFormatError(f"unknown field {sorted(unknown)[0]!r}", path)
    raise ModelFormatError(f"node has invalid field combination {sorted(keys)}", path)


def load_ensemble(source: str) -> TreeEnsemble:
    """Parse a model document (JSON text) into a validated TreeEnsemble.

    Rejections carry the JSON path of the offending field, e.g.
    ``trees[1][3].left: child index 2 invalid``.
    """
    try:
        doc = json.loads(source)
    except json.JSONDecodeError as exc:
        raise ModelFormatError(f"not valid JSON: {exc}") from exc
    if not isinstance(doc, dict):
        raise ModelFormatError("document must be a JSON object")
    unknown = set(doc) - {"format_version", "schema", "base_score", "trees", "metadata"}
    if unknown:
        raise ModelFormatError(f"unknown field {sorted(unknown)[0]!r}")
    if doc.get("format_version") != FORMAT_VERSION:
        raise ModelFormatError(
            f"unsupported format_version {doc.get('format_version')!r}", "format_version"
        )
    schema = _schema_from_json(doc.get("schema"), "schema")
    base_score = doc.get("base_score")
    if not isinstance(base_score, (int, float)) or isinstance(base_score, bool):
        raise ModelFormatError("base_score must be a number", "base_score")
    raw_trees = doc.get("trees")
    if not isinstance(raw_trees, list):
        raise ModelFormatError("trees must be a list", "trees")
    trees = []
    for t, raw_nodes in enumerate(raw_trees):
        if not isinstance(raw_nodes, list):
            raise ModelFormatError("tree must be a list of nodes", f"trees[{t}]")
        trees.append(
            tuple(
                _node_from_json(raw, f"trees[{t}][{i}]") for i, raw in enumerate(raw_nodes)
            )
        )
    metadata = doc.get("metadata", {})
    if not isinstance(metadata, dict) or not all(
        isinstance(k, str) and isinstance(v, str) for k, v in metadata.items()
    ):
        raise ModelFormatError("metadata must map text to text", "metadata")
    try:
        return TreeEnsemble(
            schema=schema,
            base_score=float(base_score),
            trees=tuple(trees),
            metadata=dict(metadata),
        )
    except ModelFormatError:
        raise
    except SchemaError as exc:
        raise ModelFormatError(str(exc)) from exc


def save_ensemble(model: TreeEnsemble) -> str:
    """Serialize to the model document format; inverse of load_ensemble."""
    trees = []
    for nodes in model.trees:
        out_nodes: list[dict] = []
        for node in nodes:
            if isinstance(node, Leaf):
                out_nodes.append({"leaf": node.value})
            elif node.categories is not None:
                out_nodes.append(
                    {
                        "feature": node.feature,
                        "categories": sorted(node.categories),
                        "left": node.left,
                        "right": node.right,
                    }
                )
            else:
                out_nodes.append(
                    {
                        "feature": node.feature,
                        "threshold": node.threshold,
                        "left": node.left,
                        "right": node.right,
                    }
                )
        trees.append(out_nodes)
    doc = {
        "format_version": FORMAT_VERSION,
        "schema": _schema_to_json(model.schema),
        "base_score": model.base_score,
        "trees": trees,
        "metadata": dict(sorted(model.metadata.items())),
    }
    return json.dumps(doc, indent=2, ensure_ascii=False) + "\n"


# --------------------------------------------------------------------------
# data table (CSV)
# --------------------------------------------------------------------------


def _format_cell(value: object) -> str:
    if isinstance(value, float):
        return repr(value)
    return str(value)


def save_table_csv(table: DataTable) -> str:
    buf = io.StringIO()
    writer = csv.writer(buf, lineterminator="\n")
    header = list(table.schema.names)
    if table.targets is not None:
        header.append(table.schema.target_name)
    writer.writerow(header)
    for i, row in enumerate(table.rows):
        cells = [_format_cell(v) for v in row]
        if table.targets is not None:
            cells.append(repr(float(table.targets[i])))
        writer.writerow(cells)
    return buf.getvalue()


def load_table_csv(text: str, schema: FeatureSchema | None = None) -> DataTable:
    """Parse a data-table CSV.

    With a schema, the header must match the schema's feature names (an
    optional final column named after the target carries targets). Without
    one, the schema is inferred: a column whose every cell parses as a float
    is numeric, anything else is categorical with its sorted distinct values
    as categories; the final column is taken as the target when every cell
    is numeric and its name is not needed as a feature.
    """
    reader = csv.reader(io.StringIO(text))
    rows = [r for r in reader if r]
    if not rows:
        raise SchemaError("empty CSV")
    header, data = rows[0], rows[1:]
    if schema is not None:
        names = list(schema.names)
        if header == names:
            has_target = False
        elif header == names + [schema.target_name]:
            has_target = True
        else:
            raise SchemaError(
                f"CSV header {header} does not match schema features {names}"
            )
        return _table_from_cells(schema, data, has_target)
    return _infer_table(header, data)


def _parse_cell(feature: Feature, cell: str) -> object:
    if feature.kind == NUMERIC:
        try:
            return float(cell)
        except ValueError:
            raise RowValidationError(
                f"feature {feature.name!r}: {cell!r} is not numeric", fields=[feature.name]
            ) from None
    return cell


def _table_from_cells(schema: FeatureSchema, data: list[list[str]], has_target: bool) -> DataTable:
    width = len(schema) + (1 if has_target else 0)
    parsed_rows: list[list[object]] = []
    targets: list[float] = []
    for line_no, cells in enumerate(data, start=2):
        if len(cells) != width:
            raise SchemaError(f"CSV line {line_no}: expected {width} cells, got {len(cells)}")
        parsed_rows.append(
            [_parse_cell(f, c) for f, c in zip(schema.features, cells)]
        )
        if has_target:
            try:
                targets.append(float(cells[-1]))
            except ValueError:
                raise SchemaError(f"CSV line {line_no}: target {cells[-1]!r} is not numeric") from None
    return DataTable(
        schema=schema,
        rows=tuple(tuple(r) for r in parsed_rows),
        targets=tuple(targets) if has_target else None,
    )


def _all_numeric(column: Iterable[str]) -> bool:
    try:
        for cell in column:
            float(cell)
    except ValueError:
        return False
    return True


def _infer_table(header: list[str], data: list[list[str]]) -> DataTable:
    if not data:
        raise SchemaError("cannot infer a schema from a CSV with no data rows")
    for line_no, cells in enumerate(data, start=2):
        if len(cells) != len(header):
            raise SchemaError(
                f"CSV line {line_no}: expected {len(header)} cells, got {len(cells)}"
            )
    columns = list(zip(*data))
    has_target = len(header) >= 2 and _all_numeric(columns[-1])
    n_features = len(header) - 1 if has_target else len(header)
    features = []
    for i in range(n_features):
        if _all_numeric(columns[i]):
            features.append(Feature(header[i], NUMERIC))
        else:
            features.append(
                Feature(header[i], CATEGORICAL, categories=tuple(sorted(set(columns[i]))))
            )
    schema = FeatureSchema(
        tuple(features), target_name=header[-1] if has_target else "target"
    )
    return _table_from_cells(schema, data, has_target)
