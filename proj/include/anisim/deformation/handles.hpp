#pragma once

// Per-frame rigid handle transforms, stored as one [frames, J, 7] parameter
// per observed trajectory: quaternion (w,x,y,z) then translation. Quaternions
// are free parameters normalized on use, so optimization never leaves the
// rotation manifold.

#include <string>
#include <utility>

#include "anisim/ad/ops.hpp"
#include "anisim/ad/param_store.hpp"

namespace anisim::deform {

inline std::string trajectory_key(std::size_t index) {
    return index == 0 ? "T" : "T." + std::to_string(index);
}

inline void init_handle_transforms(ad::ParamStore& store, const std::string& key,
                                   std::int64_t frames, std::int64_t num_handles) {
    check_contract(frames >= 1 && num_handles >= 1, "handle transforms: bad sizes");
    ad::Tensor t({frames, num_handles, 7});
    for (std::int64_t f = 0; f < frames; ++f)
        for (std::int64_t j = 0; j < num_handles; ++j)
            t.data()[(f * num_handles + j) * 7] = 1.0;  // identity rotation, zero offset
    store.add(key, std::move(t));
}

// Rotation matrices and translations for one frame of a transform tensor.
inline std::pair<ad::Tensor, ad::Tensor> frame_transforms(const ad::Tensor& transforms,
                                                          std::int64_t frame) {
    check_contract(transforms.ndim() == 3 && transforms.dim(2) == 7,
                   "frame_transforms: expects [F,J,7]");
    const std::int64_t j = transforms.dim(1);
    ad::Tensor row = ad::reshape(ad::slice_rows(transforms, frame, frame + 1), {j, 7});
    ad::Tensor rot = ad::quat_to_rotmat(ad::quat_normalize(ad::slice_cols(row, 0, 4)));
    ad::Tensor trans = ad::slice_cols(row, 4, 7);
    return {std::move(rot), std::move(trans)};
}

}  // namespace anisim::deform
