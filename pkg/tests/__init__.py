# Copyright (C) 2015. BMW Car IT GmbH. All rights reserved.
