#pragma once

#include <stdexcept>
#include <string>

namespace tadfkd {

// Base class for every error this library throws on purpose.
struct Error : std::runtime_error {
    explicit Error(const std::string& what) : std::runtime_error(what) {}
};

#define TADFKD_DEFINE_ERROR(Name)                                  \
    struct Name final : Error {                                    \
        explicit Name(const std::string& what) : Error(what) {}    \
    }

TADFKD_DEFINE_ERROR(ShapeMismatch);
TADFKD_DEFINE_ERROR(InvalidAxis);
TADFKD_DEFINE_ERROR(NotScalar);
TADFKD_DEFINE_ERROR(BatchTooSmall);
TADFKD_DEFINE_ERROR(IoError);
TADFKD_DEFINE_ERROR(SchemaVersionMismatch);
TADFKD_DEFINE_ERROR(ChecksumMismatch);
TADFKD_DEFINE_ERROR(LayerCountMismatch);
TADFKD_DEFINE_ERROR(GridMismatch);
TADFKD_DEFINE_ERROR(EmptySelection);
TADFKD_DEFINE_ERROR(DegenerateFit);
TADFKD_DEFINE_ERROR(EmptyDataset);
TADFKD_DEFINE_ERROR(KTooLarge);
TADFKD_DEFINE_ERROR(MissingGroup);
TADFKD_DEFINE_ERROR(InvalidSpec);

#undef TADFKD_DEFINE_ERROR

} // namespace tadfkd
