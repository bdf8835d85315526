#pragma once

#include "dmdnet/autodiff.hpp"
#include "dmdnet/diffgeo.hpp"
#include "dmdnet/error.hpp"
#include "dmdnet/io.hpp"
#include "dmdnet/losses.hpp"
#include "dmdnet/mesh.hpp"
#include "dmdnet/nearest.hpp"
#include "dmdnet/network.hpp"
#include "dmdnet/noise.hpp"
#include "dmdnet/pipeline.hpp"
#include "dmdnet/shapes.hpp"
#include "dmdnet/sparse.hpp"
#include "dmdnet/tensor.hpp"
#include "dmdnet/trainer.hpp"
