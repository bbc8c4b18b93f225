"""Category taxonomy: thing/stuff kinds and grading roles.

Segment id 0 in rasters always means "no annotation" (void pixels). The
category carrying role="void" is the real, annotatable class for scene
background; explicit segments of it are regular stuff segments, distinct
from unlabeled id-0 pixels. Unlabeled pixels project onto the void-role
category id in semantic rasters.
"""

from __future__ import annotations

from dataclasses import dataclass, field

from .errors import UnknownCategoryError, UnknownCategoryNameError, ValidationError

KIND_THING = "thing"
KIND_STUFF = "stuff"
KINDS = (KIND_THING, KIND_STUFF)

ROLE_VOID = "void"
ROLE_FRUIT_FG = "fruit_foreground"
ROLE_FRUIT_BG = "fruit_background"
ROLE_DEFECT = "defect"
ROLES = (ROLE_VOID, ROLE_FRUIT_FG, ROLE_FRUIT_BG, ROLE_DEFECT)


@dataclass(frozen=True)
class Category:
    category_id: int
    name: str
    kind: str
    role: str
    color: tuple[int, int, int]

    def __post_init__(self):
        if self.category_id <= 0:
            raise ValidationError(f"category id must be positive: {self.category_id}")
        if self.kind not in KINDS:
            raise ValidationError(f"unknown kind {self.kind!r}")
        if self.role not in ROLES:
            raise ValidationError(f"unknown role {self.role!r}")
        if self.role == ROLE_DEFECT and self.kind != KIND_THING:
            raise ValidationError(f"defect category {self.name!r} must be a thing")
        if self.role in (ROLE_FRUIT_FG, ROLE_FRUIT_BG) and self.kind != KIND_STUFF:
            raise ValidationError(f"fruit category {self.name!r} must be stuff")
        if len(self.color) != 3 or any(not 0 <= c <= 255 for c in self.color):
            raise ValidationError(f"color must be an RGB triple: {self.color}")


@dataclass(frozen=True)
class CategoryTaxonomy:
    categories: tuple[Category, ...]
    _by_id: dict[int, Category] = field(init=False, repr=False, compare=False)

    def __post_init__(self):
        object.__setattr__(self, "categories", tuple(self.categories))
        by_id = {}
        for cat in self.categories:
            if cat.category_id in by_id:
                raise ValidationError(f"duplicate category id {cat.category_id}")
            by_id[cat.category_id] = cat
        voids = [c for c in self.categories if c.role == ROLE_VOID]
        if len(voids) != 1:
            raise ValidationError(f"exactly one void category required, got {len(voids)}")
        for role in (ROLE_FRUIT_FG, ROLE_FRUIT_BG):
            if len([c for c in self.categories if c.role == role]) > 1:
                raise ValidationError(f"at most one {role} category allowed")
        object.__setattr__(self, "_by_id", by_id)

    def __contains__(self, category_id: int) -> bool:
        return category_id in self._by_id

    def get(self, category_id: int) -> Category:
        try:
            return self._by_id[category_id]
        except KeyError:
            raise UnknownCategoryError(f"category id {category_id} not in taxonomy") from None

    def by_name(self, name: str) -> Category:
        for cat in self.categories:
            if cat.name == name:
                return cat
        raise UnknownCategoryNameError(f"no category named {name!r}")

    @property
    def void_id(self) -> int:
        return next(c.category_id for c in self.categories if c.role == ROLE_VOID)

    @property
    def fruit_foreground_id(self) -> int | None:
        ids = [c.category_id for c in self.categories if c.role == ROLE_FRUIT_FG]
        return ids[0] if ids else None

    @property
    def fruit_background_id(self) -> int | None:
        ids = [c.category_id for c in self.categories if c.role == ROLE_FRUIT_BG]
        return ids[0] if ids else None

    @property
    def defect_ids(self) -> tuple[int, ...]:
        return tuple(c.category_id for c in self.categories if c.role == ROLE_DEFECT)

    @property
    def thing_ids(self) -> tuple[int, ...]:
        return tuple(c.category_id for c in self.categories if c.kind == KIND_THING)

    def ids_with_role(self, role: str) -> tuple[int, ...]:
        return tuple(c.category_id for c in self.categories if c.role == role)


def banana_taxonomy(defect_mode: str = "single") -> CategoryTaxonomy:
    """The banana-grading taxonomy used throughout the docs and fixtures.

    defect_mode "single" collapses all defects into one generic class;
    "four" keeps the bruise/scar age split.
    """
    base = [
        Category(1, "Background", KIND_STUFF, ROLE_VOID, (40, 40, 40)),
        Category(2, "Foreground Banana", KIND_STUFF, ROLE_FRUIT_FG, (255, 221, 0)),
        Category(3, "Background Banana", KIND_STUFF, ROLE_FRUIT_BG, (255, 140, 0)),
    ]
    if defect_mode == "single":
        base.append(Category(4, "Defect", KIND_THING, ROLE_DEFECT, (220, 20, 60)))
    elif defect_mode == "four":
        base.extend(
            [
                Category(4, "Old Bruise", KIND_THING, ROLE_DEFECT, (220, 20, 60)),
                Category(5, "New Bruise", KIND_THING, ROLE_DEFECT, (255, 105, 180)),
                Category(6, "Old Scar", KIND_THING, ROLE_DEFECT, (128, 0, 128)),
                Category(7, "New Scar", KIND_THING, ROLE_DEFECT, (0, 128, 128)),
            ]
        )
    else:
        raise ValueError(f"defect_mode must be 'single' or 'four', got {defect_mode!r}")
    return CategoryTaxonomy(tuple(base))
