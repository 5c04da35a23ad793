#pragma once

// Umbrella header for the differentiable rasterization library.

#include "diffraster/adam.hpp"
#include "diffraster/camera.hpp"
#include "diffraster/errors.hpp"
#include "diffraster/image.hpp"
#include "diffraster/losses.hpp"
#include "diffraster/mesh.hpp"
#include "diffraster/obj_io.hpp"
#include "diffraster/parallel.hpp"
#include "diffraster/png_io.hpp"
#include "diffraster/raster.hpp"
#include "diffraster/rng.hpp"
#include "diffraster/scene.hpp"
#include "diffraster/scene_config.hpp"
#include "diffraster/shading.hpp"
#include "diffraster/tasks.hpp"
#include "diffraster/vec.hpp"
