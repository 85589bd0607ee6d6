// Apache License, Version 2.0, refer to LICENSE.txt
#ifndef COCO_USER_HPP
#define COCO_USER_HPP
#pragma once

#include "coco/density.hpp"

namespace coco {

// Policy-facing view of one task: observed context and interaction record
// only. True arm means and latent context stay inside the environment.
struct UserRecord {
    int id = 0;
    double x_obs = 0.0;       // true continuous observed context
    Index context_index = 0;  // snapped to the nearest grid context value
    History history;
    int interactions = 0;     // c_i
    bool active = true;
};

}  // namespace coco

#endif  // COCO_USER_HPP
