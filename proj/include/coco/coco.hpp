// Apache License, Version 2.0, refer to LICENSE.txt
#ifndef COCO_COCO_HPP
#define COCO_COCO_HPP
#pragma once

#include "coco/acquisition.hpp"
#include "coco/config.hpp"
#include "coco/density.hpp"
#include "coco/environments.hpp"
#include "coco/grid.hpp"
#include "coco/harness.hpp"
#include "coco/io.hpp"
#include "coco/kernel.hpp"
#include "coco/kl_basis.hpp"
#include "coco/smc.hpp"
#include "coco/user.hpp"

#endif  // COCO_COCO_HPP
