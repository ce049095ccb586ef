#pragma once

#include "afpilot/types.hpp"
#include "afpilot/geometry.hpp"
#include "afpilot/rng.hpp"
#include "afpilot/transforms.hpp"
#include "afpilot/framing.hpp"
#include "afpilot/channel.hpp"
#include "afpilot/estimation.hpp"
#include "afpilot/ar.hpp"
#include "afpilot/lstm.hpp"
#include "afpilot/detection.hpp"
#include "afpilot/config.hpp"
#include "afpilot/simulation.hpp"
#include "afpilot/harness.hpp"
