#pragma once

#include "softcbf/backup.hpp"
#include "softcbf/certify.hpp"
#include "softcbf/commands.hpp"
#include "softcbf/filter.hpp"
#include "softcbf/geometry.hpp"
#include "softcbf/scenario.hpp"
#include "softcbf/sim.hpp"
#include "softcbf/softmin.hpp"
#include "softcbf/systems.hpp"
#include "softcbf/types.hpp"
