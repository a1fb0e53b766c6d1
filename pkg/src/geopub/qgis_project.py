"""Parse QGIS project files and resolve their datasource references.

A QGIS project is an XML document with root element ``qgis``. Layers live in
``maplayer`` elements under a ``projectlayers`` descendant, and each layer
names where its data lives in a ``datasource`` child. Datasource strings come
in many flavours: plain paths, paths with provider options appended after a
``|``, driver-prefixed subdataset syntax (``NETCDF:"file.nc":var``), database
connection strings, and service URLs. This module extracts the file-backed
ones and resolves them to absolute paths.
"""

from __future__ import annotations

import logging
import os
import re
import xml.etree.ElementTree as ET
from dataclasses import dataclass
from enum import Enum
from pathlib import Path

from .errors import ParseError

logger = logging.getLogger(__name__)

#: Companion files a shapefile needs to be usable, probed in this order.
SHAPEFILE_SIDECAR_EXTENSIONS = (".shx", ".dbf", ".prj", ".cpg", ".qpj")

_URL_SCHEME = re.compile(r"^[A-Za-z][A-Za-z0-9+.\-]*://")
_DRIVER_PREFIX = re.compile(r"^([A-Za-z][A-Za-z0-9_]*):(.+)$", re.DOTALL)


class SourceKind(Enum):
    """Classification of a file-backed datasource by extension."""

    SHAPEFILE = "shapefile"
    NETCDF = "netcdf"
    RASTER = "raster"
    OTHER = "other"


@dataclass(frozen=True)
class LayerEntry:
    """One ``maplayer`` element with a non-empty datasource."""

    layer_name: str
    raw_datasource: str
    provider: str = ""


@dataclass(frozen=True)
class ProjectFile:
    """A parsed project: path, title, and layers in document order."""

    path: Path
    title: str
    layers: tuple[LayerEntry, ...]


@dataclass(frozen=True)
class DataSourceRef:
    """A datasource resolved to a concrete file on the filesystem."""

    resolved_path: Path
    kind: SourceKind
    sidecars: tuple[Path, ...]
    origin_layer: str


@dataclass(frozen=True)
class NonFileSource:
    """A datasource that denotes a database or remote service, not a file."""

    raw: str
    origin_layer: str


def parse_project(path: str | os.PathLike) -> ProjectFile:
    """Parse a QGIS project file.

    Returns one :class:`LayerEntry` per ``maplayer`` element that carries a
    non-empty ``datasource`` child, preserving document order. The project
    title is taken from the root's ``title`` child when present.

    Raises:
        ParseError: malformed XML, or root element is not ``qgis``.
        OSError: the file cannot be read.
    """
    project_path = Path(os.path.abspath(path))
    try:
        tree = ET.parse(project_path)
    except ET.ParseError as exc:
        raise ParseError(f"{project_path}: not well-formed XML: {exc}") from exc
    root = tree.getroot()
    if root.tag != "qgis":
        raise ParseError(
            f"{project_path}: unrecognized root element <{root.tag}>, expected <qgis>"
        )

    title_el = root.find("title")
    title = (title_el.text or "").strip() if title_el is not None else ""

    layers = []
    for container in root.iter("projectlayers"):
        for maplayer in container.iter("maplayer"):
            datasource_el = maplayer.find("datasource")
            raw = datasource_el.text if datasource_el is not None else None
            if raw is None or not raw.strip():
                continue
            name_el = maplayer.find("layername")
            provider_el = maplayer.find("provider")
            layers.append(
                LayerEntry(
                    layer_name=(name_el.text or "").strip() if name_el is not None else "",
                    raw_datasource=raw,
                    provider=(provider_el.text or "").strip() if provider_el is not None else "",
                )
            )

    return ProjectFile(path=project_path, title=title, layers=tuple(layers))


def resolve_datasource(
    entry: LayerEntry, project_dir: str | os.PathLike
) -> DataSourceRef | NonFileSource:
    """Resolve one layer's datasource string to a file reference.

    Provider options (everything from the first ``|``) and driver prefixes
    (``NAME:`` followed by a quoted or unquoted path) are stripped to obtain
    the candidate path; relative candidates are resolved against
    ``project_dir``. Strings that denote databases or remote services
    (``dbname=``, ``url=``, or a URL scheme) yield :class:`NonFileSource`.
    """
    raw = entry.raw_datasource.strip()
    if "dbname=" in raw or "url=" in raw or _URL_SCHEME.match(raw):
        return NonFileSource(raw=entry.raw_datasource, origin_layer=entry.layer_name)

    candidate = raw.split("|", 1)[0].strip()
    candidate = _strip_driver_prefix(candidate)

    if not os.path.isabs(candidate):
        candidate = os.path.join(os.path.abspath(project_dir), candidate)
    resolved = Path(os.path.normpath(candidate))

    kind = _classify(resolved)
    sidecars = _existing_sidecars(resolved) if kind is SourceKind.SHAPEFILE else ()
    return DataSourceRef(
        resolved_path=resolved,
        kind=kind,
        sidecars=sidecars,
        origin_layer=entry.layer_name,
    )


def collect_datasources(project: ProjectFile) -> list[DataSourceRef]:
    """Resolve every layer of a project, skipping non-file sources.

    Non-file sources are dropped with a warning. The result is de-duplicated
    by resolved path, keeping the first occurrence, in order of first
    appearance.
    """
    project_dir = project.path.parent
    seen: set[Path] = set()
    refs: list[DataSourceRef] = []
    for entry in project.layers:
        ref = resolve_datasource(entry, project_dir)
        if isinstance(ref, NonFileSource):
            logger.warning(
                "skipping non-file datasource of layer %r: %s",
                entry.layer_name,
                ref.raw.strip(),
            )
            continue
        if ref.resolved_path in seen:
            continue
        seen.add(ref.resolved_path)
        refs.append(ref)
    return refs


def _strip_driver_prefix(candidate: str) -> str:
    match = _DRIVER_PREFIX.match(candidate)
    if match is None:
        return candidate
    rest = match.group(2)
    if rest.startswith('"'):
        closing = rest.find('"', 1)
        if closing > 0:
            return rest[1:closing]
        return rest[1:]
    # Unquoted subdataset syntax: the path runs up to the next colon, if any.
    return rest.split(":", 1)[0]


def _classify(path: Path) -> SourceKind:
    ext = path.suffix.lower()
    if ext == ".shp":
        return SourceKind.SHAPEFILE
    if ext == ".nc":
        return SourceKind.NETCDF
    if ext in (".tif", ".tiff", ".asc"):
        return SourceKind.RASTER
    return SourceKind.OTHER


def _existing_sidecars(shapefile: Path) -> tuple[Path, ...]:
    found = []
    for ext in SHAPEFILE_SIDECAR_EXTENSIONS:
        sidecar = shapefile.with_suffix(ext)
        if sidecar.is_file():
            found.append(sidecar)
    return tuple(found)
