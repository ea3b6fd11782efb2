#pragma once

#include "delayguard/errors.hpp"
#include "delayguard/history.hpp"
#include "delayguard/system.hpp"
#include "delayguard/small_gain.hpp"
#include "delayguard/qp.hpp"
#include "delayguard/functionals.hpp"
#include "delayguard/controllers.hpp"
#include "delayguard/dde.hpp"
#include "delayguard/robots.hpp"
#include "delayguard/config.hpp"
#include "delayguard/report.hpp"
#include "delayguard/selftest.hpp"
