#pragma once

#include <string>

#include <httplib.h>

#include "vdss/service.hpp"

namespace vdss {

/// Registers the review API on `server`. A non-empty token requires
/// "Authorization: Bearer <token>" on every request.
void mount_routes(httplib::Server& server, ReviewService& service, std::string token = {});

/// HTTP status for a ServiceError code.
int http_status_for(const std::string& code);

}  // namespace vdss
