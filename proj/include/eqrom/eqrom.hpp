#pragma once

#include "common.hpp"
#include "mesh.hpp"
#include "mesh_io.hpp"
#include "materials.hpp"
#include "assembly.hpp"
#include "solvers.hpp"
#include "reduction.hpp"
#include "hyperreduction.hpp"
#include "indicator.hpp"
#include "rom.hpp"
#include "greedy.hpp"
#include "io.hpp"
#include "studies.hpp"
