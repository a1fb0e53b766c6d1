"""geopub: publish QGIS mesh-generation provenance to repository services.

The library extracts every file a QGIS project depends on, checksums the set
together with the project file and the generated mesh, and deposits it on a
repository service in exchange for a citable DOI. Software source trees are
published the same way, keyed by their exact version so an already published
version's DOI is reused instead of minted again.
"""

from .errors import (
    AuthError,
    AuthorsFormatError,
    BindError,
    CacheCorruptError,
    CacheLockError,
    CapabilityNotSupportedError,
    ChecksumMismatchError,
    ConfigError,
    GeopubError,
    MissingFileError,
    NetworkError,
    NotFoundError,
    ParseError,
    ProtocolError,
    QuotaError,
    ValidationError,
)
from .manifest import (
    ManifestEntry,
    PublicationManifest,
    build_manifest,
    checksum_file,
    derive_metadata,
    manifest_to_json,
)
from .mock_service import Fault, FaultKind, MockServer, MockService, ServiceConfig
from .orchestrator import (
    ArtifactKind,
    DoiCache,
    DoiCacheRecord,
    SoftwarePublication,
    build_source_archive,
    link_depositions,
    publish_data,
    publish_software,
    version_tag,
)
from .qgis_project import (
    DataSourceRef,
    LayerEntry,
    NonFileSource,
    ProjectFile,
    SourceKind,
    collect_datasources,
    parse_project,
    resolve_datasource,
)
from .repo_protocol import (
    BackendProfile,
    Deposition,
    DepositionMeta,
    DepositionState,
    DepositionSummary,
    PublicationResult,
    RemoteFile,
    RepositoryClient,
)
from .vcs_info import (
    AuthorRef,
    SourceVersion,
    VersionKind,
    detect_version,
    parse_authors,
    render_authors,
    tree_hash,
)

__version__ = "0.1.0"

__all__ = [
    "ArtifactKind",
    "AuthError",
    "AuthorRef",
    "AuthorsFormatError",
    "BackendProfile",
    "BindError",
    "CacheCorruptError",
    "CacheLockError",
    "CapabilityNotSupportedError",
    "ChecksumMismatchError",
    "ConfigError",
    "DataSourceRef",
    "Deposition",
    "DepositionMeta",
    "DepositionState",
    "DepositionSummary",
    "DoiCache",
    "DoiCacheRecord",
    "Fault",
    "FaultKind",
    "GeopubError",
    "LayerEntry",
    "ManifestEntry",
    "MissingFileError",
    "MockServer",
    "MockService",
    "NetworkError",
    "NonFileSource",
    "NotFoundError",
    "ParseError",
    "ProjectFile",
    "ProtocolError",
    "PublicationManifest",
    "PublicationResult",
    "QuotaError",
    "RemoteFile",
    "RepositoryClient",
    "ServiceConfig",
    "SoftwarePublication",
    "SourceKind",
    "SourceVersion",
    "ValidationError",
    "VersionKind",
    "build_manifest",
    "build_source_archive",
    "checksum_file",
    "collect_datasources",
    "derive_metadata",
    "detect_version",
    "link_depositions",
    "manifest_to_json",
    "parse_authors",
    "parse_project",
    "publish_data",
    "publish_software",
    "render_authors",
    "resolve_datasource",
    "tree_hash",
    "version_tag",
]
