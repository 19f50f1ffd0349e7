"""Pushbroom hyperspectral georectification via footprint-mesh rasterization."""

from .calibration import (
    CalibrationSet,
    CaptureSettings,
    IlluminationSpectrum,
    StretchBounds,
    calibrate,
    compute_response,
    nearest_band,
    stretch_bounds,
)
from .collection import Collection, load_collection
from .cube_io import (
    BandPlane,
    CubeHandle,
    CubeHeader,
    MapInfo,
    open_cube,
    preload,
    read_band,
    read_header,
    read_pose_log,
    write_cube,
)
from .geodesy import (
    GeodeticPoint,
    InsRecord,
    NedOrigin,
    NedPoint,
    Orientation,
    PoseTrack,
    UtmCoordinate,
    grid_convergence,
    interpolate_poses,
    select_zone,
    slerp,
    to_ned,
    utm_to_wgs84,
    wgs84_to_utm,
)
from .mesh import (
    Bounds,
    FootprintMesh,
    FovVectors,
    GroundModel,
    LineFootprint,
    build_mesh,
    estimate_ground_height,
    line_endpoints,
    mesh_bounds,
    project_fov,
)
from .raster import (
    CoverageLut,
    PixelBuffer,
    ViewWindow,
    evaluate_band,
    export_cube,
    rasterize_geometry,
    rasterize_mesh,
    render_collection,
    transform_vertex,
)

__version__ = "0.1.0"
