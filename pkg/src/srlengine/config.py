"""Engine configuration: one JSON document covering providers, rule files,
templates, lexicons, ports, and the data directory. Paths left unset resolve
to the defaults packaged under srlengine/data/."""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from importlib import resources
from pathlib import Path
from typing import Mapping

from .analyzer import AnalyzerConfig


def packaged_data(name: str) -> Path:
    return Path(str(resources.files("srlengine") / "data" / name))


@dataclass(frozen=True)
class ProviderSpec:
    model_ref: str
    kind: str = "scripted"  # scripted | http
    endpoint: str = ""
    model: str = ""
    credential_env: str | None = None
    max_concurrent: int = 4


@dataclass(frozen=True)
class EngineConfig:
    data_dir: str = "./srlengine-data"
    port: int = 8080
    admin_token: str = "change-me"
    label_rules_path: str = ""
    taxonomy_path: str = ""
    taxonomy_profile: str = "COPES"
    statements_path: str = ""
    trigger_rules_path: str = ""
    templates_path: str = ""
    lexicon_path: str = ""
    scaffold_model_ref: str = "scripted"
    writing_model_ref: str = "scripted"
    gateway_timeout_s: float = 10.0
    tick_ms: int = 10000
    providers: tuple[ProviderSpec, ...] = ()
    analyzer: AnalyzerConfig = field(default_factory=AnalyzerConfig)

    def resolved(self, name: str) -> Path:
        value: str = getattr(self, f"{name}_path")
        if value:
            return Path(value)
        packaged = {
            "label_rules": "label_rules.json",
            "taxonomy": "taxonomy.json",
            "statements": "statements.json",
            "trigger_rules": "trigger_rules.json",
            "templates": "templates.json",
            "lexicon": "lexicon.json",
        }
        return packaged_data(packaged[name])

    @classmethod
    def from_doc(cls, doc: Mapping) -> "EngineConfig":
        analyzer_doc = doc.get("analyzer", {})
        providers = tuple(
            ProviderSpec(
                model_ref=str(p["model_ref"]),
                kind=str(p.get("kind", "http")),
                endpoint=str(p.get("endpoint", "")),
                model=str(p.get("model", p.get("model_ref", ""))),
                credential_env=p.get("credential_env"),
                max_concurrent=int(p.get("max_concurrent", 4)),
            )
            for p in doc.get("providers", [])
        )
        return cls(
            data_dir=str(doc.get("data_dir", "./srlengine-data")),
            port=int(doc.get("port", 8080)),
            admin_token=str(doc.get("admin_token", "change-me")),
            label_rules_path=str(doc.get("label_rules", "")),
            taxonomy_path=str(doc.get("taxonomy", "")),
            taxonomy_profile=str(doc.get("taxonomy_profile", "COPES")),
            statements_path=str(doc.get("statements", "")),
            trigger_rules_path=str(doc.get("trigger_rules", "")),
            templates_path=str(doc.get("templates", "")),
            lexicon_path=str(doc.get("lexicon", "")),
            scaffold_model_ref=str(doc.get("scaffold_model_ref", "scripted")),
            writing_model_ref=str(doc.get("writing_model_ref", "scripted")),
            gateway_timeout_s=float(doc.get("gateway_timeout_s", 10.0)),
            tick_ms=int(doc.get("tick_ms", 10000)),
            providers=providers,
            analyzer=AnalyzerConfig(
                interval_ms=int(analyzer_doc.get("interval_ms", 420000)),
                idle_cap_ms=int(analyzer_doc.get("idle_cap_ms", 60000)),
                window_ms=int(analyzer_doc.get("window_ms", 120000)),
                window_events=int(analyzer_doc.get("window_events", 20)),
                pattern_repeat=int(analyzer_doc.get("pattern_repeat", 3)),
                knowledge_threshold=float(analyzer_doc.get("knowledge_threshold", 0.6)),
            ),
        )

    @classmethod
    def from_file(cls, path: str | Path) -> "EngineConfig":
        with open(path, "r", encoding="utf-8") as fh:
            return cls.from_doc(json.load(fh))
