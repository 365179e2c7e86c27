"""Geometry/raster primitives and interchange-format parsers."""
from .geometry import (
    GeoTransform,
    PointRecord,
    Polygon,
    nearest_point,
    nearest_points,
    pixel_centers,
    pixel_to_world,
    points_in_polygon,
    polygon_area,
    polygon_centroid,
    polygon_intersection_area,
    rasterize_polygon,
    world_to_pixel,
)
from .raster import Raster, read_ascii_grid, write_ascii_grid
from .vector_io import (
    feature_collection,
    read_feature_collection,
    read_point_table,
    write_feature_collection,
    write_point_table,
)

__all__ = [
    "GeoTransform", "PointRecord", "Polygon", "Raster",
    "feature_collection", "nearest_point", "nearest_points", "pixel_centers", "pixel_to_world",
    "points_in_polygon", "polygon_area", "polygon_centroid", "polygon_intersection_area",
    "rasterize_polygon", "read_ascii_grid", "read_feature_collection", "read_point_table",
    "world_to_pixel", "write_ascii_grid", "write_feature_collection", "write_point_table",
]
