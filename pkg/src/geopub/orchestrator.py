"""The two publication flows: project data, and software source trees.

Data publication: parse the project, resolve its datasources, build the
checksummed manifest, then create / upload / publish against the backend.

Software publication: detect the exact source version, look for an existing
publication of that version first (server-side search when the backend
supports it, else the local DOI cache), and only create a new deposition when
none is found. The source tree is uploaded as a byte-deterministic tar
archive so republishing an identical tree is reproducible.
"""

from __future__ import annotations

import datetime as _dt
import json
import logging
import os
import tarfile
import tempfile
from contextlib import contextmanager
from dataclasses import dataclass
from enum import Enum
from pathlib import Path

from .errors import CacheCorruptError, CacheLockError, NotFoundError, ProtocolError, ValidationError
from .manifest import ManifestEntry, PublicationManifest, build_manifest, checksum_file
from .qgis_project import collect_datasources, parse_project
from .repo_protocol import (
    BackendProfile,
    DepositionMeta,
    PublicationResult,
    RepositoryClient,
)
from .vcs_info import SourceVersion, detect_version, iter_source_files, parse_authors

logger = logging.getLogger(__name__)


class ArtifactKind(Enum):
    SOFTWARE = "software"
    DATA = "data"


@dataclass(frozen=True)
class DoiCacheRecord:
    """Persisted mapping from a published version to its identifiers."""

    backend_name: str
    artifact_kind: ArtifactKind
    version_id: str
    publication_id: int
    doi: str
    created_at: str

    def key(self) -> tuple[str, str, str]:
        return (self.backend_name, self.artifact_kind.value, self.version_id)


@dataclass(frozen=True)
class SoftwarePublication:
    """Result of a software publication, with reuse provenance."""

    result: PublicationResult
    version: SourceVersion
    reused: bool


class DoiCache:
    """JSON-file-backed map from (backend, kind, version) to DOI.

    Writes are atomic (temp file and rename) and guarded by a lock file; a
    concurrent writer fails fast instead of corrupting the cache. A cache
    file that exists but cannot be parsed aborts the operation rather than
    being silently reset.
    """

    def __init__(self, path: str | os.PathLike):
        self.path = Path(path)
        self._held = False

    def get(self, backend_name: str, kind: ArtifactKind, version_id: str) -> DoiCacheRecord | None:
        wanted = (backend_name, kind.value, version_id)
        for record in self._load():
            if record.key() == wanted:
                return record
        return None

    def put(self, record: DoiCacheRecord) -> None:
        """Insert or overwrite the record with the same key."""
        if self._held:
            self._put_locked(record)
        else:
            with self.lock():
                self._put_locked(record)

    @contextmanager
    def lock(self):
        """Hold the cache's writer lock; a second holder fails fast."""
        lock_path = self.path.with_name(self.path.name + ".lock")
        self.path.parent.mkdir(parents=True, exist_ok=True)
        try:
            fd = os.open(lock_path, os.O_CREAT | os.O_EXCL | os.O_WRONLY)
        except FileExistsError:
            raise CacheLockError(
                f"cache {self.path} is locked by another run (lock file {lock_path})"
            ) from None
        self._held = True
        try:
            os.write(fd, str(os.getpid()).encode())
            os.close(fd)
            yield self
        finally:
            self._held = False
            try:
                os.unlink(lock_path)
            except FileNotFoundError:
                pass

    def _put_locked(self, record: DoiCacheRecord) -> None:
        records = [r for r in self._load() if r.key() != record.key()]
        records.append(record)
        document = {
            "records": [
                {
                    "backend_name": r.backend_name,
                    "artifact_kind": r.artifact_kind.value,
                    "version_id": r.version_id,
                    "publication_id": r.publication_id,
                    "doi": r.doi,
                    "created_at": r.created_at,
                }
                for r in records
            ]
        }
        self.path.parent.mkdir(parents=True, exist_ok=True)
        fd, temp_name = tempfile.mkstemp(dir=self.path.parent, prefix=self.path.name + ".")
        try:
            with os.fdopen(fd, "w", encoding="utf-8") as handle:
                json.dump(document, handle, indent=2)
            os.replace(temp_name, self.path)
        except BaseException:
            try:
                os.unlink(temp_name)
            except FileNotFoundError:
                pass
            raise

    def _load(self) -> list[DoiCacheRecord]:
        if not self.path.exists():
            return []
        try:
            document = json.loads(self.path.read_text(encoding="utf-8"))
            return [
                DoiCacheRecord(
                    backend_name=raw["backend_name"],
                    artifact_kind=ArtifactKind(raw["artifact_kind"]),
                    version_id=raw["version_id"],
                    publication_id=int(raw["publication_id"]),
                    doi=raw["doi"],
                    created_at=raw["created_at"],
                )
                for raw in document["records"]
            ]
        except (json.JSONDecodeError, KeyError, TypeError, ValueError) as exc:
            raise CacheCorruptError(f"cache file {self.path} is unreadable: {exc}") from exc


def version_tag(version: SourceVersion) -> str:
    """Deposition tag identifying an exact software version."""
    return f"version:{version.kind.value}:{versioned_id(version)}"


def versioned_id(version: SourceVersion) -> str:
    return version.id + ("-dirty" if version.dirty else "")


def publish_data(
    profile: BackendProfile,
    project_path: str | os.PathLike,
    mesh_path: str | os.PathLike | None = None,
    *,
    private: bool = False,
    title: str | None = None,
    description: str | None = None,
    related_software_doi: str | None = None,
    client: RepositoryClient | None = None,
) -> PublicationResult:
    """Publish a project's complete provenance: project file, every referenced
    data file with sidecars, and optionally the generated mesh.

    All files are checksummed before any network traffic. On an upload
    failure the draft deposition is abandoned (its id is logged for manual
    cleanup) and the error propagates.
    """
    project = parse_project(project_path)
    sources = collect_datasources(project)
    manifest = build_manifest(
        project, sources, mesh_path, title=title, description=description
    )
    client = client or RepositoryClient(profile)
    return _deposit(
        client,
        manifest,
        private=private,
        related_software_doi=related_software_doi,
    )


def publish_software(
    profile: BackendProfile,
    source_dir: str | os.PathLike,
    *,
    private: bool = False,
    use_cache: bool = True,
    cache: DoiCache | None = None,
    client: RepositoryClient | None = None,
) -> SoftwarePublication:
    """Publish a software source tree, reusing an existing DOI when that
    exact version was published before.

    Lookup order: server-side tag search when the backend supports it, else
    the local DOI cache (when enabled). Without either, every run creates a
    new deposition. Dirty working trees are publishable; their version tag
    carries a ``-dirty`` suffix and a warning is emitted.
    """
    version = detect_version(source_dir)
    if version.dirty:
        logger.warning(
            "working tree %s is dirty (uncommitted changes); publishing anyway",
            version.source_dir,
        )
    caching = use_cache and cache is not None
    if caching:
        with cache.lock():
            return _publish_software_locked(
                profile, version, private=private, cache=cache, client=client
            )
    return _publish_software_locked(profile, version, private=private, cache=None, client=client)


def _publish_software_locked(
    profile: BackendProfile,
    version: SourceVersion,
    *,
    private: bool,
    cache: DoiCache | None,
    client: RepositoryClient | None,
) -> SoftwarePublication:
    client = client or RepositoryClient(profile)
    tag = version_tag(version)
    vid = versioned_id(version)

    if profile.can_search:
        hits = client.search_by_tag(tag)
        if hits:
            deposition = client.get_deposition(hits[0].id)
            logger.info("version already published as %s; reusing", deposition.doi)
            return SoftwarePublication(
                result=PublicationResult(deposition.id, deposition.doi, deposition.doi_active),
                version=version,
                reused=True,
            )
    elif cache is not None:
        record = cache.get(profile.name, ArtifactKind.SOFTWARE, vid)
        if record is not None:
            try:
                deposition = client.get_deposition(record.publication_id)
            except NotFoundError:
                logger.warning(
                    "cached publication %d no longer exists on %s; republishing",
                    record.publication_id,
                    profile.name,
                )
            else:
                logger.info("version found in DOI cache as %s; reusing", record.doi)
                return SoftwarePublication(
                    result=PublicationResult(deposition.id, deposition.doi, deposition.doi_active),
                    version=version,
                    reused=True,
                )

    source_dir = version.source_dir
    authors = parse_authors(source_dir)
    with tempfile.TemporaryDirectory(prefix="geopub-archive-") as scratch:
        archive = build_source_archive(source_dir, Path(scratch), version.id)
        entry = ManifestEntry(
            path=archive,
            name=archive.name,
            size=archive.stat().st_size,
            sha256=checksum_file(archive),
        )
        manifest = PublicationManifest(
            entries=(entry,),
            title=f"{source_dir.name} source ({vid[:12]})",
            description=f"Source tree of {source_dir.name} at version {vid}.",
            tags=(tag, source_dir.name.lower()),
            authors=tuple(authors),
            total_size=entry.size,
        )
        result = _deposit(client, manifest, private=private)

    if cache is not None:
        cache.put(
            DoiCacheRecord(
                backend_name=profile.name,
                artifact_kind=ArtifactKind.SOFTWARE,
                version_id=vid,
                publication_id=result.publication_id,
                doi=result.doi,
                created_at=_dt.datetime.now(_dt.timezone.utc).isoformat(),
            )
        )
    return SoftwarePublication(result=result, version=version, reused=False)


def link_depositions(
    profile: BackendProfile,
    data_deposition_id: int,
    software_doi: str,
    *,
    client: RepositoryClient | None = None,
) -> None:
    """Tag a draft data deposition with the DOI of the software that produced
    it (``uses-software-doi:<doi>``)."""
    if not software_doi or not software_doi.strip():
        raise ValidationError("software DOI must be non-empty")
    client = client or RepositoryClient(profile)
    client.append_tag(data_deposition_id, f"uses-software-doi:{software_doi.strip()}")


def build_source_archive(source_dir: Path, dest_dir: Path, version_id: str) -> Path:
    """Pack a source tree into a byte-deterministic uncompressed tar.

    Members are regular files sorted by path, rooted under the tree's
    directory name, with zeroed timestamps and normalized ownership/modes, so
    the same tree always yields the same bytes. VCS metadata is excluded.
    """
    dest_dir.mkdir(parents=True, exist_ok=True)
    archive_path = dest_dir / f"{source_dir.name}-{version_id[:12]}.tar"
    with tarfile.open(archive_path, "w", format=tarfile.GNU_FORMAT) as tar:
        for path, relative in iter_source_files(source_dir):
            stat = path.stat()
            info = tarfile.TarInfo(name=f"{source_dir.name}/{relative}")
            info.size = stat.st_size
            info.mtime = 0
            info.mode = 0o755 if stat.st_mode & 0o100 else 0o644
            info.uid = info.gid = 0
            info.uname = info.gname = ""
            with open(path, "rb") as handle:
                tar.addfile(info, handle)
    return archive_path


def _deposit(
    client: RepositoryClient,
    manifest: PublicationManifest,
    *,
    private: bool,
    related_software_doi: str | None = None,
) -> PublicationResult:
    """Create, upload everything, publish. The draft is abandoned on upload
    failure and its id logged for manual cleanup."""
    meta = DepositionMeta(
        title=manifest.title,
        description=manifest.description,
        tags=manifest.tags,
        authors=manifest.authors,
    )
    deposition = client.create_deposition(meta, private=private)
    logger.info(
        "created draft deposition %d (doi %s, %d files to upload)",
        deposition.id,
        deposition.doi,
        len(manifest.entries),
    )
    if related_software_doi is not None:
        link_depositions(
            client.profile, deposition.id, related_software_doi, client=client
        )
    try:
        for entry in manifest.entries:
            with open(entry.path, "rb") as handle:
                client.upload_file(deposition.id, entry, handle)
            logger.info("uploaded %s (%d bytes)", entry.name, entry.size)
    except ProtocolError:
        logger.error(
            "upload failed; draft deposition %d was left on the server, "
            "clean it up manually",
            deposition.id,
        )
        raise
    return client.publish_deposition(deposition.id, private=private)
