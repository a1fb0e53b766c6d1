"""Shared fixtures: project-tree builders and in-process mock backends."""

from __future__ import annotations

import itertools
from pathlib import Path
from xml.sax.saxutils import escape

import pytest

from geopub.mock_service import MockService, ServiceConfig
from geopub.repo_protocol import (
    BackendProfile,
    RepositoryClient,
    unregister_inprocess_handler,
)

_backend_counter = itertools.count(1)


def project_xml(layers: list[tuple[str, str]], title: str = "") -> str:
    """A minimal project document with the given (layername, datasource)
    pairs."""
    maplayers = "\n".join(
        "    <maplayer>\n"
        f"      <layername>{escape(name)}</layername>\n"
        f"      <datasource>{escape(datasource)}</datasource>\n"
        "      <provider>ogr</provider>\n"
        "    </maplayer>"
        for name, datasource in layers
    )
    return (
        '<?xml version="1.0" encoding="utf-8"?>\n'
        '<qgis projectname="" version="2.8.2">\n'
        f"  <title>{escape(title)}</title>\n"
        "  <projectlayers>\n"
        f"{maplayers}\n"
        "  </projectlayers>\n"
        "</qgis>\n"
    )


def write_project(path: Path, layers: list[tuple[str, str]], title: str = "") -> Path:
    path.parent.mkdir(parents=True, exist_ok=True)
    path.write_text(project_xml(layers, title=title), encoding="utf-8")
    return path


class OrkneyTree:
    """A realistic fixture: coastline shapefile (with two sidecars), two
    NetCDF files, a mesh, and the project file referencing them."""

    def __init__(self, root: Path):
        data = root / "data"
        data.mkdir(parents=True)
        self.shapefile = data / "coastline.shp"
        self.shapefile.write_bytes(b"shp\x00fake coastline geometry")
        self.sidecars = [data / "coastline.dbf", data / "coastline.shx"]
        self.sidecars[0].write_bytes(b"dbf\x00attributes")
        self.sidecars[1].write_bytes(b"shx\x00index")
        self.bathymetry = data / "bathymetry.nc"
        self.bathymetry.write_bytes(b"CDF\x01fake bathymetry grid")
        self.resolution = data / "resolution.nc"
        self.resolution.write_bytes(b"CDF\x01fake resolution grid")
        mesh_dir = root / "mesh"
        mesh_dir.mkdir()
        self.mesh = mesh_dir / "orkney.msh"
        self.mesh.write_text(
            "$MeshFormat\n2.2 0 8\n$EndMeshFormat\n$Nodes\n1\n1 0 0 0\n$EndNodes\n"
        )
        self.project = write_project(
            root / "orkney.qgs",
            [
                ("coastline", "./data/coastline.shp"),
                ("bathymetry", "./data/bathymetry.nc"),
                ("mesh resolution", "./data/resolution.nc|layername=mesh_size"),
            ],
        )
        #: Every file a complete publication must contain.
        self.all_files = [
            self.project,
            self.shapefile,
            *self.sidecars,
            self.bathymetry,
            self.resolution,
            self.mesh,
        ]


@pytest.fixture
def orkney(tmp_path: Path) -> OrkneyTree:
    return OrkneyTree(tmp_path / "orkney")


class Backend:
    """An in-process mock backend plus a client profile wired to it."""

    def __init__(self, service: MockService, name: str, token: str = "test-token"):
        self.service = service
        self.registry_name = name
        base_url = service.register_inprocess(name)
        self.profile = BackendProfile(
            name="figshare-like" if service.config.can_search else "zenodo-like",
            base_url=base_url,
            can_search=service.config.can_search,
            auth_token=token,
        )

    def client(self, **kwargs) -> RepositoryClient:
        kwargs.setdefault("retry_backoff", 0.001)
        return RepositoryClient(self.profile, **kwargs)

    def close(self):
        unregister_inprocess_handler(self.registry_name)


@pytest.fixture
def make_backend():
    """Factory for in-process backends; unregisters them on teardown."""
    created: list[Backend] = []

    def factory(config: ServiceConfig | None = None, **kwargs) -> Backend:
        service = MockService(config or ServiceConfig.figshare_like())
        backend = Backend(service, f"backend{next(_backend_counter)}", **kwargs)
        created.append(backend)
        return backend

    yield factory
    for backend in created:
        backend.close()


@pytest.fixture
def backend(make_backend) -> Backend:
    return make_backend()
